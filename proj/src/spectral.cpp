#include "neuromon/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "neuromon/errors.hpp"

namespace neuromon {

namespace {

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw InputError(std::string(what) + ": non-finite value");
        }
    }
}

double entropy_from_distribution(std::span<const double> p, double norm_log) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    if (norm_log <= 0.0) {
        return 0.0;
    }
    return h / norm_log;
}

}  // namespace

const char* level_name(Level level) {
    switch (level) {
        case Level::intra: return "intra";
        case Level::inter: return "inter";
        case Level::inst: return "inst";
    }
    return "?";
}

Level level_from_name(const std::string& name) {
    if (name == "intra") return Level::intra;
    if (name == "inter") return Level::inter;
    if (name == "inst") return Level::inst;
    throw InputError("unknown level: " + name);
}

std::size_t level_dim(Level level) {
    return level == Level::intra ? 3 : 2;
}

Spectrum dft_spectrum(std::span<const double> series, double epsilon) {
    if (series.size() < 2) {
        throw DegenerateWindowError("dft_spectrum: need at least 2 samples");
    }
    if (epsilon <= 0.0) {
        throw InputError("dft_spectrum: epsilon must be positive");
    }
    require_finite(series, "dft_spectrum");

    const std::size_t n = series.size();
    std::vector<double> centered(n);
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        centered[t] = std::abs(series[t]);
        mean += centered[t];
    }
    mean /= static_cast<double>(n);
    for (double& y : centered) {
        y -= mean;
    }

    const std::size_t bins = n / 2 + 1;  // F
    Spectrum spectrum;
    spectrum.power.resize(bins);
    const double base = -2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t f = 0; f < bins; ++f) {
        // running phase rotation instead of per-term polar calls
        const std::complex<double> w = std::polar(1.0, base * static_cast<double>(f));
        std::complex<double> phase{1.0, 0.0};
        std::complex<double> coeff{0.0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            coeff += centered[t] * phase;
            phase *= w;
        }
        spectrum.power[f] = std::norm(coeff);
    }

    spectrum.non_dc_power = 0.0;
    for (std::size_t f = 1; f < bins; ++f) {
        spectrum.non_dc_power += spectrum.power[f];
    }
    spectrum.normalized.resize(bins - 1);
    const double denom = spectrum.non_dc_power + epsilon;
    for (std::size_t f = 1; f < bins; ++f) {
        spectrum.normalized[f - 1] = spectrum.power[f] / denom;
    }
    return spectrum;
}

double spectral_entropy(const Spectrum& spectrum) {
    if (spectrum.bins() < 2) {
        throw DegenerateWindowError("spectral_entropy: need F >= 2");
    }
    const std::size_t effective = spectrum.bins() - 1;  // F - 1
    if (effective == 1) {
        return 0.0;  // single non-DC bin carries no dispersion information
    }
    return entropy_from_distribution(spectrum.normalized,
                                     std::log(static_cast<double>(effective)));
}

namespace {

Spectrum exact_spectrum_checked(std::span<const double> series, double epsilon,
                                std::size_t min_len) {
    if (series.size() < min_len) {
        throw DegenerateWindowError("feature extraction: series too short");
    }
    return dft_spectrum(series, epsilon);
}

double time_domain_energy(std::span<const double> series) {
    const std::size_t n = series.size();
    double mean = 0.0;
    for (double v : series) {
        mean += std::abs(v);
    }
    mean /= static_cast<double>(n);
    double energy = 0.0;
    for (double v : series) {
        const double y = std::abs(v) - mean;
        energy += y * y;
    }
    return std::max(energy, 0.0);
}

}  // namespace

FeatureVector intra_features(std::span<const double> series, double epsilon) {
    Spectrum spectrum = exact_spectrum_checked(series, epsilon, 4);
    const std::size_t bins = spectrum.bins();
    // F_HF = { f : floor(F/2)+1 <= f <= F }
    double hf = 0.0;
    for (std::size_t f = bins / 2 + 1; f <= bins; ++f) {
        hf += spectrum.normalized[f - 2];
    }
    FeatureVector out;
    out.level = Level::intra;
    out.dim = 3;
    out.values[0] = hf;
    out.values[1] = spectral_entropy(spectrum);
    out.values[2] = std::log(time_domain_energy(series) + epsilon);
    return out;
}

FeatureVector inter_features(std::span<const double> series, double epsilon) {
    Spectrum spectrum = exact_spectrum_checked(series, epsilon, 4);
    double dom = 0.0;
    for (double v : spectrum.normalized) {
        dom = std::max(dom, v);
    }
    FeatureVector out;
    out.level = Level::inter;
    out.dim = 2;
    out.values[0] = dom;
    out.values[1] = spectral_entropy(spectrum);
    return out;
}

FeatureVector inst_features(std::span<const double> series, double epsilon) {
    Spectrum spectrum = exact_spectrum_checked(series, epsilon, 4);
    const std::size_t bins = spectrum.bins();
    // F_LF = { f : 2 <= f <= floor(F/2) }; empty for F <= 3
    double lf = 0.0;
    for (std::size_t f = 2; f <= bins / 2; ++f) {
        lf += spectrum.normalized[f - 2];
    }
    FeatureVector out;
    out.level = Level::inst;
    out.dim = 2;
    out.values[0] = lf;
    out.values[1] = spectral_entropy(spectrum);
    return out;
}

double frequency_energy_log(const Spectrum& spectrum, double epsilon) {
    return std::log(spectrum.non_dc_power + epsilon);
}

// ---- ProbeSet ----

namespace {

std::uint64_t fnv1a(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

ProbeSet::ProbeSet(std::vector<double> omegas) : omegas_(std::move(omegas)) {
    if (omegas_.size() < 2) {
        throw InputError("ProbeSet: need at least 2 probes");
    }
    for (std::size_t i = 0; i < omegas_.size(); ++i) {
        const double w = omegas_[i];
        if (!(w > 0.0) || w > std::numbers::pi) {
            throw InputError("ProbeSet: omega out of (0, pi]");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (omegas_[j] == w) {
                throw InputError("ProbeSet: duplicate omega");
            }
        }
    }
    q_.reserve(omegas_.size());
    eta_.reserve(omegas_.size());
    for (double w : omegas_) {
        const std::complex<double> q = std::polar(1.0, -w);
        q_.push_back(q);
        eta_.push_back(1.0 / (std::complex<double>{1.0, 0.0} - q));
    }
    hash_ = fnv1a(omegas_.data(), omegas_.size() * sizeof(double));
}

ProbeSet ProbeSet::uniform_default() {
    std::vector<double> omegas(16);
    for (std::size_t k = 0; k < 16; ++k) {
        omegas[k] = std::numbers::pi * static_cast<double>(k + 1) / 16.0;
    }
    return ProbeSet(std::move(omegas));
}

// ---- SpectralWindowState ----

SpectralWindowState::SpectralWindowState(std::size_t channels, ProbeSet probes,
                                         double epsilon)
    : channels_(channels),
      probes_(std::move(probes)),
      epsilon_(epsilon) {
    if (channels_ == 0) {
        throw InputError("SpectralWindowState: need at least one channel");
    }
    const std::size_t k = probes_.size();
    sum_.assign(channels_, 0.0);
    square_sum_.assign(channels_, 0.0);
    acc_.assign(channels_ * k, {0.0, 0.0});
    alpha_.assign(k, {1.0, 0.0});
    beta_.resize(k);
    rho_.assign(k, {1.0, 0.0});
    left_ = 1;
    for (std::size_t i = 0; i < k; ++i) {
        beta_[i] = probes_.q(i);  // q^s with s = 1
    }
}

void SpectralWindowState::push(std::span<const double> activations) {
    if (activations.size() != channels_) {
        throw ShapeError("push: channel count mismatch");
    }
    require_finite(activations, "push");

    std::vector<double> magnitudes(channels_);
    for (std::size_t n = 0; n < channels_; ++n) {
        magnitudes[n] = std::abs(activations[n]);
    }
    const std::size_t k = probes_.size();
    for (std::size_t i = 0; i < k; ++i) {
        alpha_[i] *= probes_.q(i);
        rho_[i] *= probes_.q(i);
    }
    for (std::size_t n = 0; n < channels_; ++n) {
        const double y = magnitudes[n];
        sum_[n] += y;
        square_sum_[n] += y * y;
        for (std::size_t i = 0; i < k; ++i) {
            acc_[n * k + i] += y * alpha_[i];
        }
    }
    queue_.push_back(std::move(magnitudes));
    ++ops_since_rebuild_;
    maybe_rebuild();
}

void SpectralWindowState::pop(std::size_t count) {
    if (count > queue_.size()) {
        throw InputError("pop: underflow, window shorter than pop count");
    }
    const std::size_t k = probes_.size();
    for (std::size_t popped = 0; popped < count; ++popped) {
        const std::vector<double>& oldest = queue_.front();
        for (std::size_t n = 0; n < channels_; ++n) {
            const double y = oldest[n];
            sum_[n] -= y;
            square_sum_[n] -= y * y;
            for (std::size_t i = 0; i < k; ++i) {
                acc_[n * k + i] -= y * beta_[i];
            }
        }
        for (std::size_t i = 0; i < k; ++i) {
            beta_[i] *= probes_.q(i);
            rho_[i] *= std::conj(probes_.q(i));  // q^-1, |q| = 1
        }
        queue_.pop_front();
        ++left_;
        ++ops_since_rebuild_;
    }
    maybe_rebuild();
}

std::vector<FeatureVector> SpectralWindowState::features(Level level) const {
    const std::size_t window = queue_.size();
    if (window < 2) {
        throw DegenerateWindowError("features: window length < 2");
    }
    const std::size_t k = probes_.size();
    std::vector<std::complex<double>> geometric(k);  // B_k = sum_{i=s..t} q^i
    for (std::size_t i = 0; i < k; ++i) {
        geometric[i] = beta_[i] * (std::complex<double>{1.0, 0.0} - rho_[i]) * probes_.eta(i);
    }

    const double half_log = std::log(static_cast<double>(k));
    const std::size_t hf_start = k / 2;  // probes with 0-based index >= floor(K/2)

    std::vector<FeatureVector> out(channels_);
    std::vector<double> normalized(k);
    for (std::size_t n = 0; n < channels_; ++n) {
        const double mean = sum_[n] / static_cast<double>(window);
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const std::complex<double> s = acc_[n * k + i] - mean * geometric[i];
            normalized[i] = std::norm(s);
            total += normalized[i];
        }
        const double denom = total + epsilon_;
        for (double& p : normalized) {
            p /= denom;
        }
        const double entropy = entropy_from_distribution(normalized, half_log);

        FeatureVector& fv = out[n];
        fv.level = level;
        fv.dim = level_dim(level);
        switch (level) {
            case Level::intra: {
                double hf = 0.0;
                for (std::size_t i = hf_start; i < k; ++i) {
                    hf += normalized[i];
                }
                double energy = square_sum_[n] - sum_[n] * sum_[n] / static_cast<double>(window);
                energy = std::max(energy, 0.0);
                fv.values[0] = hf;
                fv.values[1] = entropy;
                fv.values[2] = std::log(energy + epsilon_);
                break;
            }
            case Level::inter: {
                fv.values[0] = *std::max_element(normalized.begin(), normalized.end());
                fv.values[1] = entropy;
                break;
            }
            case Level::inst: {
                double lf = 0.0;
                for (std::size_t i = 0; i < hf_start; ++i) {
                    lf += normalized[i];
                }
                fv.values[0] = lf;
                fv.values[1] = entropy;
                break;
            }
        }
    }
    return out;
}

void SpectralWindowState::rebuild() {
    const std::size_t k = probes_.size();
    std::fill(sum_.begin(), sum_.end(), 0.0);
    std::fill(square_sum_.begin(), square_sum_.end(), 0.0);
    std::fill(acc_.begin(), acc_.end(), std::complex<double>{0.0, 0.0});

    const std::size_t window = queue_.size();
    const std::size_t right = left_ + window - 1;  // t; left_ is s
    for (std::size_t i = 0; i < k; ++i) {
        const double w = probes_.omega(i);
        alpha_[i] = window == 0 ? std::polar(1.0, -w * static_cast<double>(left_ - 1))
                                : std::polar(1.0, -w * static_cast<double>(right));
        beta_[i] = std::polar(1.0, -w * static_cast<double>(left_));
        rho_[i] = std::polar(1.0, -w * static_cast<double>(window));
    }
    std::size_t index = left_;
    for (const std::vector<double>& entry : queue_) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::complex<double> phase =
                std::polar(1.0, -probes_.omega(i) * static_cast<double>(index));
            for (std::size_t n = 0; n < channels_; ++n) {
                acc_[n * k + i] += entry[n] * phase;
            }
        }
        for (std::size_t n = 0; n < channels_; ++n) {
            sum_[n] += entry[n];
            square_sum_[n] += entry[n] * entry[n];
        }
        ++index;
    }
    ops_since_rebuild_ = 0;
}

void SpectralWindowState::maybe_rebuild() {
    if (ops_since_rebuild_ >= kRebuildInterval) {
        rebuild();
    }
}

}  // namespace neuromon
