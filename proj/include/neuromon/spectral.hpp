#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

namespace neuromon {

inline constexpr double kDefaultEpsilon = 1e-15;
inline constexpr std::size_t kRebuildInterval = 4096;

enum class Level { intra, inter, inst };

const char* level_name(Level level);
Level level_from_name(const std::string& name);

/// Level-tagged feature tuple.
/// intra: (r_HF, H, e)  inter: (r_dom, H)  inst: (r_LF, H)
struct FeatureVector {
    Level level = Level::intra;
    std::array<double, 3> values{};
    std::size_t dim = 0;

    std::span<const double> as_span() const { return {values.data(), dim}; }
};

std::size_t level_dim(Level level);

/// One-sided power spectrum of a mean-removed magnitude sequence.
/// power is indexed f = 1..F stored at [f-1]; normalized is f = 2..F at [f-2].
struct Spectrum {
    std::vector<double> power;
    std::vector<double> normalized;
    double non_dc_power = 0.0;  // sum of power over f = 2..F

    std::size_t bins() const { return power.size(); }
};

// ---- exact-DFT path (whole-series features) ----

Spectrum dft_spectrum(std::span<const double> series, double epsilon = kDefaultEpsilon);

double spectral_entropy(const Spectrum& spectrum);

FeatureVector intra_features(std::span<const double> series, double epsilon = kDefaultEpsilon);
FeatureVector inter_features(std::span<const double> series, double epsilon = kDefaultEpsilon);
FeatureVector inst_features(std::span<const double> series, double epsilon = kDefaultEpsilon);

/// Frequency-domain variant of the total variation energy term,
/// log(sum_{f=2..F} P(f) + eps). Kept for cross-checking the time-domain E.
double frequency_energy_log(const Spectrum& spectrum, double epsilon = kDefaultEpsilon);

// ---- incremental probe path ----

/// Fixed set of angular frequency probes with per-probe constants.
class ProbeSet {
public:
    explicit ProbeSet(std::vector<double> omegas);

    static ProbeSet uniform_default();  // K = 16, omega_k = pi*k/16

    std::size_t size() const { return omegas_.size(); }
    double omega(std::size_t k) const { return omegas_[k]; }
    std::complex<double> q(std::size_t k) const { return q_[k]; }
    std::complex<double> eta(std::size_t k) const { return eta_[k]; }
    const std::vector<double>& omegas() const { return omegas_; }

    /// Stable content hash, stored in model files to prevent feature/model skew.
    std::uint64_t hash() const { return hash_; }

private:
    std::vector<double> omegas_;
    std::vector<std::complex<double>> q_;
    std::vector<std::complex<double>> eta_;
    std::uint64_t hash_ = 0;
};

/// Incremental per-channel sliding-window state over magnitude vectors.
/// Single-owner mutable; one state per monitored stream.
class SpectralWindowState {
public:
    SpectralWindowState(std::size_t channels, ProbeSet probes,
                        double epsilon = kDefaultEpsilon);

    std::size_t channels() const { return channels_; }
    std::size_t length() const { return queue_.size(); }
    const ProbeSet& probes() const { return probes_; }

    /// Push one token's activations; magnitudes are taken internally (x = |a|).
    void push(std::span<const double> activations);

    /// Pop the `count` oldest tokens.
    void pop(std::size_t count);

    /// Features for every channel at the requested level. Requires length >= 2.
    std::vector<FeatureVector> features(Level level) const;

    /// Exact recompute of all running state from the queue contents.
    void rebuild();

    // introspection for tests
    double running_sum(std::size_t channel) const { return sum_[channel]; }
    double running_square_sum(std::size_t channel) const { return square_sum_[channel]; }
    std::complex<double> accumulator(std::size_t channel, std::size_t probe) const {
        return acc_[channel * probes_.size() + probe];
    }
    std::complex<double> alpha(std::size_t k) const { return alpha_[k]; }
    std::size_t ops_since_rebuild() const { return ops_since_rebuild_; }

private:
    void maybe_rebuild();

    std::size_t channels_;
    ProbeSet probes_;
    double epsilon_;

    std::deque<std::vector<double>> queue_;  // magnitude vectors y_i
    std::size_t left_ = 0;                   // window left index s
    std::vector<double> sum_;                // U
    std::vector<double> square_sum_;         // V
    std::vector<std::complex<double>> acc_;  // A, channels x K row-major
    std::vector<std::complex<double>> alpha_;  // q^t
    std::vector<std::complex<double>> beta_;   // q^s
    std::vector<std::complex<double>> rho_;    // q^L
    std::size_t ops_since_rebuild_ = 0;
};

}  // namespace neuromon
