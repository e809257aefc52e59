#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neuromon/spectral.hpp"

namespace neuromon {

enum class NeuronKind { ffn, attention_head };

const char* neuron_kind_name(NeuronKind kind);
NeuronKind neuron_kind_from_name(const std::string& name);

struct NeuronId {
    std::uint64_t id = 0;
    NeuronKind kind = NeuronKind::ffn;
    std::uint32_t layer = 0;

    bool operator==(const NeuronId&) const = default;
};

/// Attribution scores, neurons x time steps, row-major.
struct AttributionMatrix {
    std::vector<NeuronId> neurons;
    std::size_t steps = 0;
    std::vector<double> scores;  // neurons.size() * steps

    double score(std::size_t neuron, std::size_t step) const {
        return scores[neuron * steps + step];
    }
    void validate() const;  // finiteness, unique ids, shape
};

struct MonSelection {
    Level level = Level::intra;
    std::vector<NeuronId> neurons;  // sorted by ascending id
    std::size_t k = 0;
    bool empty_intersection_warning = false;
};

/// Intersection over all time steps of the per-step top-k neuron sets.
/// Ties at the boundary break by ascending neuron id.
MonSelection select_mon(const AttributionMatrix& matrix, std::size_t k, Level level);

enum class AttributionFormat { text, binary };

AttributionMatrix load_attributions(const std::filesystem::path& path, AttributionFormat format);
void save_attributions(const AttributionMatrix& matrix, const std::filesystem::path& path,
                       AttributionFormat format);

}  // namespace neuromon
