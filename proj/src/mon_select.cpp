#include "neuromon/mon_select.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "neuromon/errors.hpp"

namespace neuromon {

namespace {

constexpr char kBinaryMagic[16] = {'N', 'R', 'M', 'N', 'A', 'T', 'T', 'R',
                                   'C', 'O', 'L', 'U', 'M', 'N', 'A', '1'};

}  // namespace

const char* neuron_kind_name(NeuronKind kind) {
    return kind == NeuronKind::ffn ? "ffn" : "attention_head";
}

NeuronKind neuron_kind_from_name(const std::string& name) {
    if (name == "ffn") return NeuronKind::ffn;
    if (name == "attention_head") return NeuronKind::attention_head;
    throw ParseError("unknown neuron kind: " + name);
}

void AttributionMatrix::validate() const {
    if (neurons.empty() || steps == 0) {
        throw InputError("AttributionMatrix: empty matrix");
    }
    if (scores.size() != neurons.size() * steps) {
        throw InputError("AttributionMatrix: score count does not match shape");
    }
    for (double v : scores) {
        if (!std::isfinite(v)) {
            throw InputError("AttributionMatrix: non-finite score");
        }
    }
    std::set<std::uint64_t> seen;
    for (const NeuronId& n : neurons) {
        if (!seen.insert(n.id).second) {
            throw InputError("AttributionMatrix: duplicate neuron id");
        }
    }
}

MonSelection select_mon(const AttributionMatrix& matrix, std::size_t k, Level level) {
    matrix.validate();
    const std::size_t count = matrix.neurons.size();
    if (k == 0 || k > count) {
        throw InputError("select_mon: k must be in [1, neuron count]");
    }

    std::vector<std::size_t> order(count);
    std::vector<bool> surviving(count, true);
    for (std::size_t step = 0; step < matrix.steps; ++step) {
        std::iota(order.begin(), order.end(), 0);
        // score descending, then id ascending for determinism at the boundary
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         order.end(), [&](std::size_t a, std::size_t b) {
                             const double sa = matrix.score(a, step);
                             const double sb = matrix.score(b, step);
                             if (sa != sb) return sa > sb;
                             return matrix.neurons[a].id < matrix.neurons[b].id;
                         });
        std::vector<bool> in_top(count, false);
        for (std::size_t i = 0; i < k; ++i) {
            in_top[order[i]] = true;
        }
        for (std::size_t i = 0; i < count; ++i) {
            if (!in_top[i]) surviving[i] = false;
        }
    }

    MonSelection out;
    out.level = level;
    out.k = k;
    for (std::size_t i = 0; i < count; ++i) {
        if (surviving[i]) out.neurons.push_back(matrix.neurons[i]);
    }
    std::sort(out.neurons.begin(), out.neurons.end(),
              [](const NeuronId& a, const NeuronId& b) { return a.id < b.id; });
    out.empty_intersection_warning = out.neurons.empty();
    return out;
}

namespace {

AttributionMatrix load_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError("empty attribution file", 0);
    std::istringstream header(line);
    std::string tag;
    int version = 0;
    std::size_t steps = 0;
    header >> tag >> version >> steps;
    if (tag != "attributions" || version != 1 || steps == 0) {
        throw ParseError("bad attribution header at line 1");
    }

    AttributionMatrix matrix;
    matrix.steps = steps;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        NeuronId id;
        std::string kind;
        row >> id.id >> kind >> id.layer;
        if (!row) throw ParseError("malformed neuron record at line " + std::to_string(line_no));
        id.kind = neuron_kind_from_name(kind);
        for (std::size_t s = 0; s < steps; ++s) {
            double v;
            row >> v;
            if (!row) {
                throw ParseError("missing score at line " + std::to_string(line_no));
            }
            matrix.scores.push_back(v);
        }
        matrix.neurons.push_back(id);
    }
    matrix.validate();
    return matrix;
}

void save_text(const AttributionMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "attributions 1 " << matrix.steps << "\n";
    for (std::size_t i = 0; i < matrix.neurons.size(); ++i) {
        const NeuronId& n = matrix.neurons[i];
        out << n.id << ' ' << neuron_kind_name(n.kind) << ' ' << n.layer;
        for (std::size_t s = 0; s < matrix.steps; ++s) {
            out << ' ' << matrix.score(i, s);
        }
        out << "\n";
    }
}

template <typename T>
void write_le(std::ostream& out, T value) {
    // assumes little-endian host, as does the rest of the binary I/O
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, std::size_t& offset) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw ParseError("truncated attribution file", offset);
    offset += sizeof(T);
    return value;
}

AttributionMatrix load_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[16];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kBinaryMagic, sizeof(magic)) != 0) {
        throw ParseError("bad attribution magic", 0);
    }
    std::size_t offset = 16;
    const auto count = read_le<std::uint64_t>(in, offset);
    const auto steps = read_le<std::uint64_t>(in, offset);
    AttributionMatrix matrix;
    matrix.steps = steps;
    matrix.neurons.resize(count);
    for (auto& n : matrix.neurons) {
        n.id = read_le<std::uint64_t>(in, offset);
        const auto kind = read_le<std::uint8_t>(in, offset);
        if (kind > 1) throw ParseError("bad neuron kind", offset);
        n.kind = static_cast<NeuronKind>(kind);
        n.layer = read_le<std::uint32_t>(in, offset);
    }
    matrix.scores.resize(count * steps);
    // columnar: one step's scores for all neurons, then the next step
    for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t i = 0; i < count; ++i) {
            matrix.scores[i * steps + s] = read_le<double>(in, offset);
        }
    }
    matrix.validate();
    return matrix;
}

void save_binary(const AttributionMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kBinaryMagic, sizeof(kBinaryMagic));
    write_le<std::uint64_t>(out, matrix.neurons.size());
    write_le<std::uint64_t>(out, matrix.steps);
    for (const auto& n : matrix.neurons) {
        write_le<std::uint64_t>(out, n.id);
        write_le<std::uint8_t>(out, static_cast<std::uint8_t>(n.kind));
        write_le<std::uint32_t>(out, n.layer);
    }
    for (std::size_t s = 0; s < matrix.steps; ++s) {
        for (std::size_t i = 0; i < matrix.neurons.size(); ++i) {
            write_le<double>(out, matrix.score(i, s));
        }
    }
}

}  // namespace

AttributionMatrix load_attributions(const std::filesystem::path& path, AttributionFormat format) {
    return format == AttributionFormat::text ? load_text(path) : load_binary(path);
}

void save_attributions(const AttributionMatrix& matrix, const std::filesystem::path& path,
                       AttributionFormat format) {
    matrix.validate();
    if (format == AttributionFormat::text) {
        save_text(matrix, path);
    } else {
        save_binary(matrix, path);
    }
}

}  // namespace neuromon
