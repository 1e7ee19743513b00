#pragma once

// Dense row-major matrices and the GQT binary format.
//
// GQT layout (little-endian throughout):
//   bytes 0-3    magic "GQT1"
//   byte  4      dtype, 0 = f32, 1 = f64
//   bytes 5-12   rows (u64)
//   bytes 13-20  cols (u64)
//   bytes 21-    rows * cols elements, row-major

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "lutq/error.hpp"

namespace lutq {

enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

inline std::size_t element_bytes(Precision p) noexcept { return p == Precision::f32 ? 4 : 8; }

/// Row-major real matrix. Elements are always held as double; a matrix
/// declared f32 holds only float-representable values.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols, Precision precision = Precision::f64)
        : rows_(rows), cols_(cols), precision_(precision), elems_(rows * cols, 0.0) {}

    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> elems,
                Precision precision = Precision::f64)
        : rows_(rows), cols_(cols), precision_(precision), elems_(std::move(elems)) {
        if (elems_.size() != rows_ * cols_) {
            throw ArgumentError("DenseMatrix: " + std::to_string(elems_.size()) +
                                " elements do not fill a " + std::to_string(rows_) + "x" +
                                std::to_string(cols_) + " matrix");
        }
        if (precision_ == Precision::f32) {
            for (double& v : elems_) v = static_cast<float>(v);
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return elems_.size(); }
    bool empty() const noexcept { return elems_.empty(); }
    Precision precision() const noexcept { return precision_; }

    double operator()(std::size_t r, std::size_t c) const noexcept { return elems_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return elems_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const noexcept {
        return {elems_.data() + r * cols_, cols_};
    }
    std::span<double> row(std::size_t r) noexcept { return {elems_.data() + r * cols_, cols_}; }

    std::span<const double> elems() const noexcept { return elems_; }
    std::span<double> elems() noexcept { return elems_; }

    bool same_shape(const DenseMatrix& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) noexcept {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.elems_ == b.elems_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Precision precision_ = Precision::f64;
    std::vector<double> elems_;
};

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | in[static_cast<std::size_t>(i)];
    return v;
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | in[static_cast<std::size_t>(i)];
    return v;
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline float get_f32(std::span<const std::uint8_t> in) { return std::bit_cast<float>(get_u32(in)); }
inline double get_f64(std::span<const std::uint8_t> in) { return std::bit_cast<double>(get_u64(in)); }

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline constexpr std::array<char, 4> gqt_magic{'G', 'Q', 'T', '1'};
inline constexpr std::size_t gqt_header_bytes = 21;

inline std::vector<std::uint8_t> encode_gqt(const DenseMatrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw ArgumentError("GQT: matrix has a zero dimension");
    std::vector<std::uint8_t> out;
    out.reserve(gqt_header_bytes + m.size() * element_bytes(m.precision()));
    out.insert(out.end(), gqt_magic.begin(), gqt_magic.end());
    out.push_back(static_cast<std::uint8_t>(m.precision()));
    detail::put_u64(out, m.rows());
    detail::put_u64(out, m.cols());
    for (double v : m.elems()) {
        if (m.precision() == Precision::f32) {
            detail::put_f32(out, static_cast<float>(v));
        } else {
            detail::put_f64(out, v);
        }
    }
    return out;
}

inline DenseMatrix decode_gqt(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < gqt_header_bytes) throw FormatError("GQT: truncated header");
    if (!std::equal(gqt_magic.begin(), gqt_magic.end(), bytes.begin())) {
        throw FormatError("GQT: bad magic");
    }
    if (bytes[4] > 1) throw FormatError("GQT: unknown dtype " + std::to_string(bytes[4]));
    const auto precision = static_cast<Precision>(bytes[4]);
    const std::uint64_t rows = detail::get_u64(bytes.subspan(5, 8));
    const std::uint64_t cols = detail::get_u64(bytes.subspan(13, 8));
    if (rows == 0 || cols == 0) throw FormatError("GQT: zero rows or cols");
    const std::size_t width = element_bytes(precision);
    const std::size_t payload = bytes.size() - gqt_header_bytes;
    std::uint64_t count = 0;
    if (__builtin_mul_overflow(rows, cols, &count) || count > payload / width ||
        count * width != payload) {
        throw FormatError("GQT: payload of " + std::to_string(payload) + " bytes does not match " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " header");
    }
    std::vector<double> elems(count);
    auto body = bytes.subspan(gqt_header_bytes);
    for (std::size_t i = 0; i < elems.size(); ++i) {
        const double v = precision == Precision::f32
                             ? static_cast<double>(detail::get_f32(body.subspan(i * 4, 4)))
                             : detail::get_f64(body.subspan(i * 8, 8));
        if (!std::isfinite(v)) throw DataError("GQT: non-finite element at flat index " + std::to_string(i));
        elems[i] = v;
    }
    return DenseMatrix(rows, cols, std::move(elems), precision);
}

inline DenseMatrix load_matrix(const std::filesystem::path& path) {
    return decode_gqt(detail::read_file(path));
}

inline void save_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
    detail::write_file(path, encode_gqt(m));
}

/// ||A - B||_F^2, accumulated in f64.
inline double frobenius_error(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw ArgumentError("frobenius_error: shape mismatch");
    double acc = 0.0;
    const auto ea = a.elems();
    const auto eb = b.elems();
    for (std::size_t i = 0; i < ea.size(); ++i) {
        const double d = ea[i] - eb[i];
        acc += d * d;
    }
    return acc;
}

/// A * B in f64. Loop order i-k-j so the inner loop streams rows of B.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimensions differ");
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto bk = b.row(k);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += aik * bk[j];
        }
    }
    return out;
}

}  // namespace lutq
