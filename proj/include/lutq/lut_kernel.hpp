#pragma once

// Inference side: bit-packed query matrices, the LUT-gather and dequantize
// GEMM paths, and storage accounting.
//
// Packed layout: within each row, index k occupies bits [k*N, (k+1)*N) of a
// little-endian bitstream (bit 0 = LSB of byte 0); each row is padded to a
// byte boundary.
//
// Accumulation contract shared by lut_gemm and dequant_gemm: per output row i,
// acc[c] starts at 0.0f and accumulates float(w_ij) * float(X_jc) for
// j = 0..n-1 ascending; the outlier product (f64) is then rounded to float and
// added once. Both paths therefore agree bitwise.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lutq/codebook.hpp"
#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"
#include "lutq/half.hpp"
#include "lutq/outliers.hpp"
#include "lutq/parallel.hpp"

namespace lutq {

struct PackedQuery {
    std::size_t rows = 0;
    std::size_t cols = 0;
    int bits = 0;
    std::vector<std::uint8_t> payload;

    static std::size_t row_bytes_for(std::size_t cols, int bits) {
        return (cols * static_cast<std::size_t>(bits) + 7) / 8;
    }
    std::size_t row_bytes() const { return row_bytes_for(cols, bits); }
    std::span<const std::uint8_t> row(std::size_t r) const {
        return {payload.data() + r * row_bytes(), row_bytes()};
    }

    friend bool operator==(const PackedQuery&, const PackedQuery&) = default;
};

namespace detail {

inline std::uint8_t read_index(const std::uint8_t* row, std::size_t k, int bits) noexcept {
    const std::size_t bit = k * static_cast<std::size_t>(bits);
    const std::size_t byte = bit >> 3;
    const unsigned shift = bit & 7u;
    unsigned v = row[byte] >> shift;
    if (shift + static_cast<unsigned>(bits) > 8) v |= static_cast<unsigned>(row[byte + 1]) << (8 - shift);
    return static_cast<std::uint8_t>(v & ((1u << bits) - 1u));
}

inline void accumulate_row(float w, const float* x, float* acc, std::size_t p) noexcept {
    for (std::size_t c = 0; c < p; ++c) acc[c] += w * x[c];
}

}  // namespace detail

inline PackedQuery pack(const Assignment& a, int bits) {
    check_bits(bits);
    PackedQuery out{a.rows, a.cols, bits, {}};
    const std::size_t rb = out.row_bytes();
    out.payload.assign(a.rows * rb, 0);
    const unsigned limit = 1u << bits;
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::uint8_t* row = out.payload.data() + i * rb;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const unsigned q = a(i, k);
            if (q >= limit) {
                throw ArgumentError("pack: index " + std::to_string(q) + " does not fit in " +
                                    std::to_string(bits) + " bits");
            }
            const std::size_t bit = k * static_cast<std::size_t>(bits);
            const std::size_t byte = bit >> 3;
            const unsigned shift = bit & 7u;
            row[byte] = static_cast<std::uint8_t>(row[byte] | (q << shift));
            if (shift + static_cast<unsigned>(bits) > 8) {
                row[byte + 1] = static_cast<std::uint8_t>(row[byte + 1] | (q >> (8 - shift)));
            }
        }
    }
    return out;
}

inline Assignment unpack(const PackedQuery& p) {
    check_bits(p.bits);
    if (p.payload.size() != p.rows * p.row_bytes()) throw FormatError("unpack: payload length mismatch");
    Assignment a(p.rows, p.cols);
    for (std::size_t i = 0; i < p.rows; ++i) {
        const std::uint8_t* row = p.payload.data() + i * p.row_bytes();
        for (std::size_t k = 0; k < p.cols; ++k) a(i, k) = detail::read_index(row, k, p.bits);
    }
    return a;
}

/// Element type used for codebook and outlier values on disk.
enum class ValueType : std::uint8_t { f16, f32, f64 };

inline std::string to_string(ValueType v) {
    switch (v) {
        case ValueType::f16: return "f16";
        case ValueType::f32: return "f32";
        case ValueType::f64: return "f64";
    }
    return "f16";
}

inline ValueType parse_value_type(const std::string& s) {
    if (s == "f16") return ValueType::f16;
    if (s == "f32") return ValueType::f32;
    if (s == "f64") return ValueType::f64;
    throw ArgumentError("unknown value dtype '" + s + "' (f16|f32|f64)");
}

inline std::size_t value_bytes(ValueType v) { return v == ValueType::f16 ? 2 : v == ValueType::f32 ? 4 : 8; }

inline double round_to(ValueType v, double x) noexcept {
    switch (v) {
        case ValueType::f16: return round_to_half(x);
        case ValueType::f32: return static_cast<float>(x);
        case ValueType::f64: return x;
    }
    return x;
}

struct LayerMeta {
    std::string method = "ganq";
    std::string precondition = "adaptive";
    std::size_t iterations = 0;
    ValueType value_type = ValueType::f16;
};

struct QuantizedLayer {
    std::size_t m = 0;
    std::size_t n = 0;
    int bits = 0;
    Codebook codebook;
    PackedQuery query;
    std::optional<SparseOutliers> outliers;
    LayerMeta meta;

    void validate() const {
        check_bits(bits);
        if (codebook.rows != m || query.rows != m) throw FormatError("layer: codebook/query rows differ from m");
        if (query.cols != n || query.bits != bits) throw FormatError("layer: query shape differs from metadata");
        if (codebook.levels != level_count(bits)) throw FormatError("layer: codebook width differs from 2^N");
        if (query.payload.size() != m * query.row_bytes()) throw FormatError("layer: packed payload length");
        if (outliers) {
            if (outliers->rows != m || outliers->cols != n) throw FormatError("layer: outlier shape");
            outliers->validate();
        }
    }

    std::size_t outlier_nnz() const { return outliers ? outliers->nnz() : 0; }
};

inline QuantizedLayer make_layer(const QuantizedWeights& qw, int bits, LayerMeta meta = {},
                                 std::optional<SparseOutliers> outliers = std::nullopt) {
    check_consistent(qw.codebook, qw.assignment);
    QuantizedLayer layer{qw.assignment.rows, qw.assignment.cols, bits, qw.codebook,
                         pack(qw.assignment, bits), std::move(outliers), std::move(meta)};
    layer.validate();
    return layer;
}

/// The layer as it reads back from disk: codebook and outlier values rounded
/// to meta.value_type.
inline QuantizedLayer round_to_storage(QuantizedLayer layer) {
    for (double& v : layer.codebook.values) v = round_to(layer.meta.value_type, v);
    if (layer.outliers) {
        for (double& v : layer.outliers->values) v = round_to(layer.meta.value_type, v);
    }
    return layer;
}

/// Dense W~ including outliers, in f64.
inline DenseMatrix dequantize(const QuantizedLayer& layer) {
    DenseMatrix w = reconstruct(layer.codebook, unpack(layer.query));
    if (layer.outliers) w = recombine(*layer.outliers, std::move(w));
    return w;
}

namespace detail {

inline std::vector<float> to_float(const DenseMatrix& x) {
    std::vector<float> out(x.size());
    const auto e = x.elems();
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = static_cast<float>(e[i]);
    return out;
}

inline void add_outlier_row(const QuantizedLayer& layer, const DenseMatrix& x, std::size_t i, float* acc) {
    if (!layer.outliers) return;
    const SparseOutliers& s = *layer.outliers;
    const std::size_t p = x.cols();
    std::vector<double> sp(p, 0.0);
    for (std::uint64_t k = s.row_offsets[i]; k < s.row_offsets[i + 1]; ++k) {
        const double v = s.values[k];
        const auto xr = x.row(s.col_indices[k]);
        for (std::size_t c = 0; c < p; ++c) sp[c] += v * xr[c];
    }
    for (std::size_t c = 0; c < p; ++c) acc[c] += static_cast<float>(sp[c]);
}

inline void check_gemm_shapes(const QuantizedLayer& layer, const DenseMatrix& x) {
    layer.validate();
    if (x.rows() != layer.n) {
        throw ArgumentError("gemm: X has " + std::to_string(x.rows()) + " rows, layer expects " +
                            std::to_string(layer.n));
    }
}

}  // namespace detail

/// W~ X by on-the-fly index unpacking and codebook gathers; W~ is never
/// materialized. Output is float-valued (declared f32).
inline DenseMatrix lut_gemm(const QuantizedLayer& layer, const DenseMatrix& x, std::size_t threads = 1) {
    detail::check_gemm_shapes(layer, x);
    const std::size_t p = x.cols();
    const std::vector<float> xf = detail::to_float(x);
    std::vector<float> out(layer.m * p, 0.0f);
    const std::size_t rb = layer.query.row_bytes();
    parallel_for(layer.m, threads, [&](std::size_t i) {
        std::vector<float> lut(layer.codebook.levels);
        for (std::size_t s = 0; s < lut.size(); ++s) lut[s] = static_cast<float>(layer.codebook(i, s));
        const std::uint8_t* qrow = layer.query.payload.data() + i * rb;
        float* acc = out.data() + i * p;
        for (std::size_t j = 0; j < layer.n; ++j) {
            detail::accumulate_row(lut[detail::read_index(qrow, j, layer.bits)], xf.data() + j * p, acc, p);
        }
        detail::add_outlier_row(layer, x, i, acc);
    });
    return DenseMatrix(layer.m, p, std::vector<double>(out.begin(), out.end()), Precision::f32);
}

/// Reference path: dequantizes the full dense W~ (float) first, then
/// multiplies under the same accumulation contract as lut_gemm.
inline DenseMatrix dequant_gemm(const QuantizedLayer& layer, const DenseMatrix& x, std::size_t threads = 1) {
    detail::check_gemm_shapes(layer, x);
    const std::size_t p = x.cols();
    const std::size_t n = layer.n;
    const Assignment a = unpack(layer.query);
    std::vector<float> w_hat(layer.m * n);
    for (std::size_t i = 0; i < layer.m; ++i) {
        for (std::size_t j = 0; j < n; ++j) w_hat[i * n + j] = static_cast<float>(layer.codebook(i, a(i, j)));
    }
    const std::vector<float> xf = detail::to_float(x);
    std::vector<float> out(layer.m * p, 0.0f);
    parallel_for(layer.m, threads, [&](std::size_t i) {
        float* acc = out.data() + i * p;
        for (std::size_t j = 0; j < n; ++j) detail::accumulate_row(w_hat[i * n + j], xf.data() + j * p, acc, p);
        detail::add_outlier_row(layer, x, i, acc);
    });
    return DenseMatrix(layer.m, p, std::vector<double>(out.begin(), out.end()), Precision::f32);
}

/// Plain f32 dense GEMM with the same loop order; the throughput baseline.
inline DenseMatrix dense_gemm_f32(const DenseMatrix& w, const DenseMatrix& x, std::size_t threads = 1) {
    if (w.cols() != x.rows()) throw ArgumentError("dense_gemm_f32: inner dimensions differ");
    const std::size_t p = x.cols();
    const std::vector<float> wf = detail::to_float(w);
    const std::vector<float> xf = detail::to_float(x);
    std::vector<float> out(w.rows() * p, 0.0f);
    parallel_for(w.rows(), threads, [&](std::size_t i) {
        float* acc = out.data() + i * p;
        for (std::size_t j = 0; j < w.cols(); ++j) detail::accumulate_row(wf[i * w.cols() + j], xf.data() + j * p, acc, p);
    });
    return DenseMatrix(w.rows(), p, std::vector<double>(out.begin(), out.end()), Precision::f32);
}

enum class StorageScheme { fp16, uniform, lut };

inline std::string to_string(StorageScheme s) {
    switch (s) {
        case StorageScheme::fp16: return "fp16";
        case StorageScheme::uniform: return "uniform";
        case StorageScheme::lut: return "lut";
    }
    return "lut";
}

/// Deployed size in bytes. fp16 = 2mn; uniform = mnN/8 + 4m (f16 scale and
/// zero-point per row); lut = mnN/8 + 2 * 2^N * m (f16 codebook per row).
/// Outliers add 6 bytes per entry (f16 value, u32 column) plus (m + 1) u32
/// row offsets.
inline std::uint64_t storage_bytes(std::uint64_t m, std::uint64_t n, int bits, StorageScheme scheme,
                                   std::uint64_t outlier_nnz = 0) {
    check_bits(bits);
    const std::uint64_t packed = (m * n * static_cast<std::uint64_t>(bits) + 7) / 8;
    std::uint64_t total = 0;
    switch (scheme) {
        case StorageScheme::fp16: total = 2 * m * n; break;
        case StorageScheme::uniform: total = packed + 4 * m; break;
        case StorageScheme::lut: total = packed + 2 * level_count(bits) * m; break;
    }
    if (outlier_nnz > 0) total += outlier_nnz * (2 + 4) + (m + 1) * 4;
    return total;
}

/// bytes / (2mn) as a percentage, rounded to two decimals.
inline double percent_of_fp16(std::uint64_t bytes, std::uint64_t m, std::uint64_t n) {
    const double pct = 100.0 * static_cast<double>(bytes) / static_cast<double>(2 * m * n);
    return std::round(pct * 100.0) / 100.0;
}

}  // namespace lutq
