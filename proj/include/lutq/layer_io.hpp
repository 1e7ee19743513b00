#pragma once

// GQL1 quantized-layer container (little-endian throughout):
//
//   "GQL1"
//   u32              metadata length L
//   L bytes          metadata, UTF-8 JSON object
//   m * 2^N values   codebook, row-major, in metadata "value_dtype"
//   m * ceil(nN/8)   packed query matrix (see lut_kernel.hpp)
//   if "has_outliers":
//     u64            nnz
//     (m+1) u32      row offsets
//     nnz u32        column indices
//     nnz values     outlier values, in "value_dtype"
//
// Metadata keys: format_version, rows, cols, bits, method, precondition,
// iterations, value_dtype, has_outliers, outlier_nnz.

#include <array>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"
#include "lutq/half.hpp"
#include "lutq/lut_kernel.hpp"

namespace lutq {

inline constexpr std::array<char, 4> gql_magic{'G', 'Q', 'L', '1'};
inline constexpr int gql_format_version = 1;

namespace detail {

inline void put_value(std::vector<std::uint8_t>& out, ValueType t, double v) {
    switch (t) {
        case ValueType::f16: {
            const std::uint16_t h = double_to_half(v);
            out.push_back(static_cast<std::uint8_t>(h));
            out.push_back(static_cast<std::uint8_t>(h >> 8));
            break;
        }
        case ValueType::f32: put_f32(out, static_cast<float>(v)); break;
        case ValueType::f64: put_f64(out, v); break;
    }
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t count, const char* what) {
        if (count > bytes_.size() - pos_) throw FormatError(std::string("GQL: truncated ") + what);
        auto s = bytes_.subspan(pos_, count);
        pos_ += count;
        return s;
    }
    std::uint32_t u32(const char* what) { return get_u32(take(4, what)); }
    std::uint64_t u64(const char* what) { return get_u64(take(8, what)); }

    double value(ValueType t, const char* what) {
        switch (t) {
            case ValueType::f16: {
                auto s = take(2, what);
                return half_to_double(static_cast<std::uint16_t>(s[0] | (s[1] << 8)));
            }
            case ValueType::f32: return get_f32(take(4, what));
            case ValueType::f64: return get_f64(take(8, what));
        }
        return 0.0;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline nlohmann::json layer_metadata(const QuantizedLayer& layer) {
    return {
        {"format_version", gql_format_version},
        {"rows", layer.m},
        {"cols", layer.n},
        {"bits", layer.bits},
        {"method", layer.meta.method},
        {"precondition", layer.meta.precondition},
        {"iterations", layer.meta.iterations},
        {"value_dtype", to_string(layer.meta.value_type)},
        {"has_outliers", layer.outliers.has_value()},
        {"outlier_nnz", layer.outlier_nnz()},
    };
}

inline std::vector<std::uint8_t> encode_layer(const QuantizedLayer& layer) {
    layer.validate();
    std::vector<std::uint8_t> out(gql_magic.begin(), gql_magic.end());
    const std::string meta = layer_metadata(layer).dump();
    detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());
    const ValueType vt = layer.meta.value_type;
    for (double v : layer.codebook.values) detail::put_value(out, vt, v);
    out.insert(out.end(), layer.query.payload.begin(), layer.query.payload.end());
    if (layer.outliers) {
        const SparseOutliers& s = *layer.outliers;
        if (s.nnz() > std::numeric_limits<std::uint32_t>::max()) {
            throw ArgumentError("GQL: outlier count exceeds u32 row offsets");
        }
        detail::put_u64(out, s.nnz());
        for (std::uint64_t o : s.row_offsets) detail::put_u32(out, static_cast<std::uint32_t>(o));
        for (std::uint32_t c : s.col_indices) detail::put_u32(out, c);
        for (double v : s.values) detail::put_value(out, vt, v);
    }
    return out;
}

inline QuantizedLayer decode_layer(std::span<const std::uint8_t> bytes) {
    detail::Reader in(bytes);
    const auto magic = in.take(4, "magic");
    if (!std::equal(gql_magic.begin(), gql_magic.end(), magic.begin())) throw FormatError("GQL: bad magic");
    const std::uint32_t meta_len = in.u32("metadata length");
    const auto meta_bytes = in.take(meta_len, "metadata");
    nlohmann::json meta;
    QuantizedLayer layer;
    bool has_outliers = false;
    std::uint64_t meta_nnz = 0;
    try {
        meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
        if (meta.at("format_version").get<int>() != gql_format_version) {
            throw FormatError("GQL: unsupported format_version");
        }
        layer.m = meta.at("rows").get<std::size_t>();
        layer.n = meta.at("cols").get<std::size_t>();
        layer.bits = meta.at("bits").get<int>();
        layer.meta.method = meta.at("method").get<std::string>();
        layer.meta.precondition = meta.at("precondition").get<std::string>();
        layer.meta.iterations = meta.at("iterations").get<std::size_t>();
        layer.meta.value_type = parse_value_type(meta.at("value_dtype").get<std::string>());
        has_outliers = meta.at("has_outliers").get<bool>();
        meta_nnz = meta.at("outlier_nnz").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("GQL: bad metadata: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("GQL: bad metadata: ") + e.what());
    }
    if (layer.m == 0 || layer.n == 0) throw FormatError("GQL: zero rows or cols");
    if (layer.bits < min_bits || layer.bits > max_bits) throw FormatError("GQL: bit width out of range");

    const ValueType vt = layer.meta.value_type;
    const std::size_t levels = level_count(layer.bits);
    layer.codebook = Codebook(layer.m, levels);
    for (double& v : layer.codebook.values) v = in.value(vt, "codebook");

    layer.query = PackedQuery{layer.m, layer.n, layer.bits, {}};
    const auto payload = in.take(layer.m * layer.query.row_bytes(), "packed query");
    layer.query.payload.assign(payload.begin(), payload.end());

    if (has_outliers) {
        SparseOutliers s(layer.m, layer.n);
        const std::uint64_t nnz = in.u64("outlier count");
        if (nnz != meta_nnz) throw FormatError("GQL: outlier count disagrees with metadata");
        if (nnz > layer.m * layer.n) throw FormatError("GQL: outlier count exceeds matrix size");
        for (auto& o : s.row_offsets) o = in.u32("row offsets");
        s.col_indices.resize(nnz);
        for (auto& c : s.col_indices) c = in.u32("column indices");
        s.values.resize(nnz);
        for (auto& v : s.values) v = in.value(vt, "outlier values");
        layer.outliers = std::move(s);
    }
    if (!in.done()) throw FormatError("GQL: trailing bytes after layer");
    layer.validate();
    return layer;
}

inline void save_layer(const QuantizedLayer& layer, const std::filesystem::path& path) {
    detail::write_file(path, encode_layer(layer));
}

inline QuantizedLayer load_layer(const std::filesystem::path& path) {
    return decode_layer(detail::read_file(path));
}

}  // namespace lutq
