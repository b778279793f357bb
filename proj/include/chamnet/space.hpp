#pragma once

// Gene-encoded architecture search spaces: schema parsing, gene validation,
// decoding into concrete layers, and multiply-accumulate counting.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chamnet/error.hpp"

namespace chamnet {

enum class HyperparamKind { expansion_factor, channels, repeats, resolution, stride_fixed };

enum class OpKind { conv2d, inverted_bottleneck, residual_bottleneck, avgpool, fc };

inline std::string_view to_string(OpKind kind) {
    switch (kind) {
        case OpKind::conv2d: return "conv2d";
        case OpKind::inverted_bottleneck: return "inverted_bottleneck";
        case OpKind::residual_bottleneck: return "residual_bottleneck";
        case OpKind::avgpool: return "avgpool";
        case OpKind::fc: return "fc";
    }
    return "?";
}

inline std::optional<OpKind> op_kind_from_string(std::string_view s) {
    for (OpKind k : {OpKind::conv2d, OpKind::inverted_bottleneck, OpKind::residual_bottleneck,
                     OpKind::avgpool, OpKind::fc})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

/// One integer hyperparameter with an inclusive range sampled on a `step` grid.
struct HyperparamDef {
    std::string name;
    int lower = 1;
    int upper = 1;
    int default_value = 1;
    int step = 1;
    HyperparamKind kind = HyperparamKind::channels;

    bool searchable() const { return lower < upper; }
    int levels() const { return (upper - lower) / step + 1; }
    int value_at(int level) const { return lower + level * step; }
    bool contains(int v) const {
        return v >= lower && v <= upper && (v - lower) % step == 0;
    }
};

struct StageDef {
    OpKind op_kind = OpKind::conv2d;
    std::optional<HyperparamDef> expansion;
    std::optional<HyperparamDef> channels;
    std::optional<HyperparamDef> repeats;
    int stride = 1;
    int kernel = 1;
};

/// Bounds of one gene coordinate.
struct GeneBound {
    int lower = 0;
    int upper = 0;
    int step = 1;

    int levels() const { return (upper - lower) / step + 1; }
    int value_at(int level) const { return lower + level * step; }
    bool operator==(const GeneBound&) const = default;
};

/// Integer hyperparameter vector; one entry per searchable hyperparameter in
/// schema order (resolution first when it is searchable).
struct Gene {
    std::vector<int> values;

    std::size_t size() const { return values.size(); }
    int operator[](std::size_t i) const { return values[i]; }
    int& operator[](std::size_t i) { return values[i]; }
    auto operator<=>(const Gene&) const = default;
};

struct GeneHash {
    std::size_t operator()(const Gene& g) const noexcept {
        std::uint64_t h = 1469598103934665603ULL;
        for (int v : g.values) {
            h ^= static_cast<std::uint32_t>(v);
            h *= 1099511628211ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

inline std::string to_string(const Gene& g, char sep = ',') {
    std::string out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(g[i]);
    }
    return out;
}

/// A concrete layer after decoding; spatial sizes are resolved.
struct Layer {
    OpKind kind = OpKind::conv2d;
    int stage = 0;
    int in_h = 0, in_w = 0, in_c = 0;
    int out_h = 0, out_w = 0, out_c = 0;
    int stride = 1;
    int kernel = 1;
    int expansion = 1;
    int mid_c = 0;  // inner width of bottleneck blocks, 0 otherwise

    bool operator==(const Layer&) const = default;
};

using ArchitectureDescription = std::vector<Layer>;

class SearchSpace {
public:
    /// Where a gene coordinate lives: stage index (or -1 for the resolution) and kind.
    struct Slot {
        int stage = -1;
        HyperparamKind kind = HyperparamKind::resolution;
    };

    SearchSpace() = default;

    SearchSpace(std::string name, HyperparamDef resolution, std::vector<StageDef> stages,
                int input_channels = 3)
        : name_(std::move(name)), resolution_(std::move(resolution)), stages_(std::move(stages)),
          input_channels_(input_channels) {
        check();
        index();
    }

    const std::string& name() const { return name_; }
    const HyperparamDef& resolution() const { return resolution_; }
    const std::vector<StageDef>& stages() const { return stages_; }
    int input_channels() const { return input_channels_; }
    int channel_step() const { return channel_step_; }
    std::size_t dims() const { return slots_.size(); }
    const std::vector<Slot>& slots() const { return slots_; }
    bool empty() const { return stages_.empty(); }

    const HyperparamDef& def(const Slot& s) const {
        if (s.stage < 0) return resolution_;
        const StageDef& st = stages_[static_cast<std::size_t>(s.stage)];
        switch (s.kind) {
            case HyperparamKind::expansion_factor: return *st.expansion;
            case HyperparamKind::repeats: return *st.repeats;
            default: return *st.channels;
        }
    }

    std::vector<GeneBound> bounds() const {
        std::vector<GeneBound> out;
        out.reserve(slots_.size());
        for (const Slot& s : slots_) {
            const HyperparamDef& d = def(s);
            out.push_back({d.lower, d.upper, d.step});
        }
        return out;
    }

    Gene default_gene() const {
        Gene g;
        for (const Slot& s : slots_) g.values.push_back(def(s).default_value);
        return g;
    }

    /// Number of distinct genes, saturating at UINT64_MAX.
    std::uint64_t cardinality() const {
        std::uint64_t n = 1;
        for (const GeneBound& b : bounds()) {
            const auto l = static_cast<std::uint64_t>(b.levels());
            if (n > UINT64_MAX / l) return UINT64_MAX;
            n *= l;
        }
        return n;
    }

    /// Copy of this space with every searchable channel range on a `step` grid.
    SearchSpace with_channel_step(int step) const {
        if (step < 1) throw ParseError("channel_step must be >= 1");
        SearchSpace s = *this;
        s.channel_step_ = step;
        for (StageDef& st : s.stages_) {
            if (!st.channels || st.op_kind == OpKind::fc) continue;
            HyperparamDef& c = *st.channels;
            c.step = c.searchable() ? step : 1;
            if (c.searchable() &&
                (c.lower % step != 0 || c.upper % step != 0 || c.default_value % step != 0))
                throw ParseError("channel range of " + c.name + " is not on a multiple-of-" +
                                 std::to_string(step) + " grid");
        }
        return s;
    }

    /// Value of a stage hyperparameter under `gene`; fixed ones return their default.
    int stage_value(const Gene& gene, std::size_t stage, HyperparamKind kind) const {
        const auto& pos = stage_slot_[stage];
        const int idx = kind == HyperparamKind::expansion_factor ? pos[0]
                        : kind == HyperparamKind::channels       ? pos[1]
                                                                 : pos[2];
        if (idx >= 0) return gene[static_cast<std::size_t>(idx)];
        const StageDef& st = stages_[stage];
        const auto& d = kind == HyperparamKind::expansion_factor ? st.expansion
                        : kind == HyperparamKind::channels       ? st.channels
                                                                 : st.repeats;
        return d ? d->default_value : 1;
    }

    int resolution_value(const Gene& gene) const {
        return resolution_slot_ >= 0 ? gene[static_cast<std::size_t>(resolution_slot_)]
                                     : resolution_.default_value;
    }

    friend bool operator==(const SearchSpace& a, const SearchSpace& b) {
        return a.name_ == b.name_ && a.bounds() == b.bounds() &&
               a.default_gene() == b.default_gene();
    }

private:
    friend class SpaceParser;

    void check() const {
        auto check_def = [](const HyperparamDef& d) {
            if (d.lower > d.upper || d.lower < 0 || d.step < 1)
                throw ParseError("bad range for " + d.name);
            if (d.kind == HyperparamKind::stride_fixed && d.lower != d.upper)
                throw ParseError("strides are not searchable (" + d.name + ")");
            if ((d.upper - d.lower) % d.step != 0)
                throw ParseError("range of " + d.name + " is not a multiple of its step");
            if (!d.contains(d.default_value))
                throw ParseError("default of " + d.name + " lies outside its range");
        };
        check_def(resolution_);
        if (resolution_.lower < 1) throw ParseError("resolution must be positive");
        for (const StageDef& st : stages_) {
            for (const auto* d : {&st.expansion, &st.channels, &st.repeats})
                if (*d) check_def(**d);
            const bool bottleneck = st.op_kind == OpKind::inverted_bottleneck ||
                                    st.op_kind == OpKind::residual_bottleneck;
            if (bottleneck && !(st.expansion && st.channels && st.repeats))
                throw ParseError("bottleneck stages need t, c and n");
            if (st.op_kind == OpKind::conv2d && (!st.channels || st.expansion))
                throw ParseError("conv2d stages take c only");
            if (st.op_kind == OpKind::avgpool && (st.channels || st.expansion))
                throw ParseError("avgpool stages take no hyperparameters");
            if (st.op_kind == OpKind::fc && (!st.channels || st.channels->searchable()))
                throw ParseError("fc stages need a fixed output count");
            if (!bottleneck && st.repeats && st.repeats->upper != 1)
                throw ParseError(std::string(to_string(st.op_kind)) + " stages cannot repeat");
            if (st.channels && st.channels->lower < 1) throw ParseError("channels must be positive");
            if (st.stride < 1 || st.kernel < 1) throw ParseError("stride and kernel must be positive");
        }
        if (!stages_.empty() && stages_.back().op_kind != OpKind::fc)
            throw ParseError("the final stage must be an fc classifier");
    }

    void index() {
        slots_.clear();
        stage_slot_.assign(stages_.size(), {-1, -1, -1});
        resolution_slot_ = -1;
        if (resolution_.searchable()) {
            resolution_slot_ = 0;
            slots_.push_back({-1, HyperparamKind::resolution});
        }
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            const StageDef& st = stages_[i];
            const std::optional<HyperparamDef>* defs[3] = {&st.expansion, &st.channels, &st.repeats};
            for (int j = 0; j < 3; ++j) {
                const auto& d = *defs[j];
                if (d && d->searchable()) {
                    stage_slot_[i][static_cast<std::size_t>(j)] = static_cast<int>(slots_.size());
                    slots_.push_back({static_cast<int>(i), d->kind});
                }
            }
        }
    }

    std::string name_;
    HyperparamDef resolution_{"resolution", 224, 224, 224, 1, HyperparamKind::resolution};
    std::vector<StageDef> stages_;
    int input_channels_ = 3;
    int channel_step_ = 1;
    std::vector<Slot> slots_;
    std::vector<std::array<int, 3>> stage_slot_;
    int resolution_slot_ = -1;
};

// ---------------------------------------------------------------------------
// Schema text

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::optional<int> parse_int(std::string_view s) {
    s = trim(s);
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        if (i >= s.size()) break;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace detail

class SpaceParser {
public:
    /// Parses "default", "default [lower,upper]" or "-" into a def; nullopt for "-".
    static std::optional<HyperparamDef> parse_cell(std::string_view cell, std::string name,
                                                   HyperparamKind kind, std::size_t line) {
        cell = detail::trim(cell);
        if (cell == "-") return std::nullopt;
        HyperparamDef d;
        d.name = std::move(name);
        d.kind = kind;
        const auto bracket = cell.find('[');
        const auto head = detail::parse_int(cell.substr(0, bracket));
        if (!head) throw MalformedRecord(line, "expected an integer in '" + std::string(cell) + "'");
        d.default_value = d.lower = d.upper = *head;
        if (bracket != std::string_view::npos) {
            const auto close = cell.find(']', bracket);
            const auto comma = cell.find(',', bracket);
            if (close == std::string_view::npos || comma == std::string_view::npos || comma > close ||
                !detail::trim(cell.substr(close + 1)).empty())
                throw MalformedRecord(line, "bad range '" + std::string(cell) + "'");
            const auto lo = detail::parse_int(cell.substr(bracket + 1, comma - bracket - 1));
            const auto hi = detail::parse_int(cell.substr(comma + 1, close - comma - 1));
            if (!lo || !hi) throw MalformedRecord(line, "bad range '" + std::string(cell) + "'");
            d.lower = *lo;
            d.upper = *hi;
        }
        return d;
    }

    static SearchSpace parse(std::string_view text) {
        std::string name;
        std::string bottleneck = "inverted";
        int input_channels = 3;
        int resolution_step = 8;
        int channel_step = 1;
        std::optional<HyperparamDef> resolution;
        bool in_stages = false;
        std::vector<StageDef> stages;

        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto nl = text.find('\n', pos);
            std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
            pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
            ++line_no;
            const auto hash = raw.find('#');
            std::string_view line = detail::trim(raw.substr(0, hash));
            if (line.empty()) continue;

            if (!in_stages) {
                const auto eq = line.find('=');
                if (eq == std::string_view::npos) {
                    const auto cols = detail::split_ws(line);
                    if (!cols.empty() && cols[0] == "stage") {
                        in_stages = true;
                        continue;
                    }
                    throw MalformedRecord(line_no, "expected 'key = value' or the stage header");
                }
                const auto key = detail::trim(line.substr(0, eq));
                const auto value = detail::trim(line.substr(eq + 1));
                auto as_int = [&](std::string_view v) {
                    const auto x = detail::parse_int(v);
                    if (!x) throw MalformedRecord(line_no, "expected an integer for " + std::string(key));
                    return *x;
                };
                if (key == "format") {
                    if (value != "chamnet-space/1")
                        throw MalformedRecord(line_no, "unsupported format '" + std::string(value) + "'");
                } else if (key == "name") {
                    name = value;
                } else if (key == "bottleneck") {
                    if (value != "inverted" && value != "residual")
                        throw MalformedRecord(line_no, "bottleneck must be inverted or residual");
                    bottleneck = value;
                } else if (key == "input_channels") {
                    input_channels = as_int(value);
                } else if (key == "resolution") {
                    resolution = parse_cell(value, "resolution", HyperparamKind::resolution, line_no);
                    if (!resolution) throw MalformedRecord(line_no, "resolution is required");
                } else if (key == "resolution_step") {
                    resolution_step = as_int(value);
                } else if (key == "channel_step") {
                    channel_step = as_int(value);
                } else {
                    throw MalformedRecord(line_no, "unknown key '" + std::string(key) + "'");
                }
                continue;
            }

            // Stage row: op, t, c, n, s, k; a "[a,b]" token belongs to the cell before it.
            std::vector<std::string> cells;
            for (auto tok : detail::split_ws(line)) {
                if (!tok.empty() && tok.front() == '[' && !cells.empty())
                    cells.back() += " " + std::string(tok);
                else
                    cells.emplace_back(tok);
            }
            if (cells.size() != 6) throw MalformedRecord(line_no, "stage rows need 6 columns");
            StageDef st;
            const std::string& op = cells[0];
            const std::string prefix = "s" + std::to_string(stages.size()) + ".";
            if (op == "conv2d") {
                st.op_kind = OpKind::conv2d;
            } else if (op == "bottleneck") {
                st.op_kind = bottleneck == "inverted" ? OpKind::inverted_bottleneck
                                                      : OpKind::residual_bottleneck;
            } else if (op == "avgpool") {
                st.op_kind = OpKind::avgpool;
            } else if (op == "fc") {
                st.op_kind = OpKind::fc;
            } else {
                throw MalformedRecord(line_no, "unknown stage kind '" + op + "'");
            }
            st.expansion = parse_cell(cells[1], prefix + "t", HyperparamKind::expansion_factor, line_no);
            st.channels = parse_cell(cells[2], prefix + "c", HyperparamKind::channels, line_no);
            st.repeats = parse_cell(cells[3], prefix + "n", HyperparamKind::repeats, line_no);
            const auto stride = parse_cell(cells[4], prefix + "s", HyperparamKind::stride_fixed, line_no);
            const auto kernel = parse_cell(cells[5], prefix + "k", HyperparamKind::stride_fixed, line_no);
            if (stride && stride->searchable())
                throw MalformedRecord(line_no, "strides are not searchable");
            if (kernel && kernel->searchable())
                throw MalformedRecord(line_no, "kernel sizes are not searchable");
            st.stride = stride ? stride->lower : 1;
            st.kernel = kernel ? kernel->lower : 1;
            stages.push_back(std::move(st));
        }

        if (name.empty()) throw ParseError("space schema is missing 'name'");
        if (!resolution) throw ParseError("space schema is missing 'resolution'");
        if (stages.empty()) throw ParseError("space schema has no stages");
        if (resolution_step < 1) throw ParseError("resolution_step must be >= 1");
        if (resolution->searchable()) resolution->step = resolution_step;
        SearchSpace space(name, *resolution, std::move(stages), input_channels);
        return channel_step == 1 ? space : space.with_channel_step(channel_step);
    }
};

inline SearchSpace parse_space(std::string_view text) { return SpaceParser::parse(text); }

// ---------------------------------------------------------------------------
// Genes

/// True iff the gene has the space's length and every entry is on its grid.
inline bool validate(const SearchSpace& space, const Gene& gene) {
    if (gene.size() != space.dims()) return false;
    for (std::size_t i = 0; i < gene.size(); ++i)
        if (!space.def(space.slots()[i]).contains(gene[i])) return false;
    return true;
}

inline void require_valid(const SearchSpace& space, const Gene& gene) {
    if (!validate(space, gene))
        throw InvalidGene("gene [" + to_string(gene) + "] is not valid for space " + space.name());
}

/// Affine map of each coordinate onto [0, 1] using the schema bounds.
inline std::vector<double> normalize(const std::vector<GeneBound>& bounds, const Gene& gene) {
    if (gene.size() != bounds.size())
        throw DimensionMismatch("gene has " + std::to_string(gene.size()) + " entries, expected " +
                                std::to_string(bounds.size()));
    std::vector<double> x(gene.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const GeneBound& b = bounds[i];
        x[i] = b.upper > b.lower ? double(gene[i] - b.lower) / double(b.upper - b.lower) : 0.0;
    }
    return x;
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// Expands a gene into concrete layers. Repeated blocks after the first in a
/// stage use stride 1.
inline ArchitectureDescription decode(const SearchSpace& space, const Gene& gene) {
    require_valid(space, gene);
    ArchitectureDescription arch;
    int h = space.resolution_value(gene);
    int c = space.input_channels();
    for (std::size_t si = 0; si < space.stages().size(); ++si) {
        const StageDef& st = space.stages()[si];
        const int stage = static_cast<int>(si);
        switch (st.op_kind) {
            case OpKind::conv2d: {
                const int out_c = space.stage_value(gene, si, HyperparamKind::channels);
                const int out_h = ceil_div(h, st.stride);
                arch.push_back({OpKind::conv2d, stage, h, h, c, out_h, out_h, out_c, st.stride, st.kernel, 1, 0});
                h = out_h;
                c = out_c;
                break;
            }
            case OpKind::inverted_bottleneck:
            case OpKind::residual_bottleneck: {
                const int t = space.stage_value(gene, si, HyperparamKind::expansion_factor);
                const int width = space.stage_value(gene, si, HyperparamKind::channels);
                const int n = space.stage_value(gene, si, HyperparamKind::repeats);
                const bool inverted = st.op_kind == OpKind::inverted_bottleneck;
                const int out_c = inverted ? width : width * t;
                for (int r = 0; r < n; ++r) {
                    const int stride = r == 0 ? st.stride : 1;
                    const int out_h = ceil_div(h, stride);
                    const int mid = inverted ? c * t : width;
                    arch.push_back({st.op_kind, stage, h, h, c, out_h, out_h, out_c, stride, st.kernel, t, mid});
                    h = out_h;
                    c = out_c;
                }
                break;
            }
            case OpKind::avgpool:
                arch.push_back({OpKind::avgpool, stage, h, h, c, 1, 1, c, 1, h, 1, 0});
                h = 1;
                break;
            case OpKind::fc: {
                const int out_c = st.channels->default_value;
                arch.push_back({OpKind::fc, stage, 1, 1, c, 1, 1, out_c, 1, 1, 1, 0});
                c = out_c;
                break;
            }
        }
    }
    return arch;
}

/// Multiply-accumulate count of one layer. Depthwise convs cost
/// H_out*W_out*C*K^2; expansion and projection are plain 1x1 convs.
inline std::uint64_t layer_macs(const Layer& l) {
    using u64 = std::uint64_t;
    const u64 in_hw = u64(l.in_h) * u64(l.in_w);
    const u64 out_hw = u64(l.out_h) * u64(l.out_w);
    const u64 k2 = u64(l.kernel) * u64(l.kernel);
    switch (l.kind) {
        case OpKind::conv2d:
            return out_hw * u64(l.in_c) * u64(l.out_c) * k2;
        case OpKind::inverted_bottleneck: {
            const u64 expand = l.expansion != 1 ? in_hw * u64(l.in_c) * u64(l.mid_c) : 0;
            return expand + out_hw * u64(l.mid_c) * k2 + out_hw * u64(l.mid_c) * u64(l.out_c);
        }
        case OpKind::residual_bottleneck: {
            const u64 shortcut =
                (l.stride != 1 || l.in_c != l.out_c) ? out_hw * u64(l.in_c) * u64(l.out_c) : 0;
            return in_hw * u64(l.in_c) * u64(l.mid_c) + out_hw * u64(l.mid_c) * u64(l.mid_c) * k2 +
                   out_hw * u64(l.mid_c) * u64(l.out_c) + shortcut;
        }
        case OpKind::avgpool:
            return in_hw * u64(l.in_c);
        case OpKind::fc:
            return u64(l.in_c) * u64(l.out_c);
    }
    return 0;
}

inline std::uint64_t flops(const ArchitectureDescription& arch) {
    std::uint64_t total = 0;
    for (const Layer& l : arch) total += layer_macs(l);
    return total;
}

inline std::uint64_t flops(const SearchSpace& space, const Gene& gene) {
    return flops(decode(space, gene));
}

/// MACs grouped by schema stage.
inline std::vector<std::uint64_t> stage_flops(const SearchSpace& space, const Gene& gene) {
    std::vector<std::uint64_t> out(space.stages().size(), 0);
    for (const Layer& l : decode(space, gene)) out[static_cast<std::size_t>(l.stage)] += layer_macs(l);
    return out;
}

/// Parses "224,32,16,..." into a gene.
inline Gene parse_gene(std::string_view text) {
    Gene g;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const auto tok = text.substr(pos, comma == std::string_view::npos ? text.size() - pos : comma - pos);
        const auto v = detail::parse_int(tok);
        if (!v) throw ParseError("bad gene entry '" + std::string(tok) + "'");
        g.values.push_back(*v);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return g;
}

}  // namespace chamnet
