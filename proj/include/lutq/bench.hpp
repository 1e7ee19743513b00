#pragma once

// Experiment harness behind the command-line tool: quantize, eval, compare and
// the preconditioning sweep. Every command is a pure function of its config.

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lutq/baselines.hpp"
#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"
#include "lutq/layer_io.hpp"
#include "lutq/lut_kernel.hpp"
#include "lutq/outliers.hpp"
#include "lutq/report.hpp"
#include "lutq/solver.hpp"
#include "lutq/synthetic.hpp"

namespace lutq {

enum class Method { ganq, ganq_star, rtn, kmeans, oracle };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::ganq: return "ganq";
        case Method::ganq_star: return "ganq_star";
        case Method::rtn: return "rtn";
        case Method::kmeans: return "kmeans";
        case Method::oracle: return "oracle";
    }
    return "ganq";
}

inline Method parse_method(const std::string& s) {
    if (s == "ganq") return Method::ganq;
    if (s == "ganq_star") return Method::ganq_star;
    if (s == "rtn") return Method::rtn;
    if (s == "kmeans") return Method::kmeans;
    if (s == "oracle") return Method::oracle;
    throw ConfigError("unknown method '" + s + "' (ganq|ganq_star|rtn|kmeans|oracle)");
}

/// Either a GQT file or a synthetic generator. For calibration sources the
/// row count is taken from the weights and `cols` of 0 means p = 8n.
struct MatrixSource {
    std::string path;
    Distribution dist = Distribution::gauss;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::uint64_t seed = 0;

    bool synthetic() const { return path.empty(); }

    nlohmann::json to_json() const {
        if (!synthetic()) return {{"path", path}};
        return {{"synthetic", to_string(dist)}, {"rows", rows}, {"cols", cols}, {"seed", seed}};
    }
};

struct RunConfig {
    MatrixSource weights;
    MatrixSource calib;
    Method method = Method::ganq;
    int bits = 4;
    std::size_t iterations = 10;
    double outlier_ratio = 0.005;
    PrecondPolicy precond = PrecondPolicy::adaptive();
    InitMethod init = InitMethod::uniform_grid;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    ValueType value_type = ValueType::f16;
    std::string output_path;
    std::string report_path;

    SolverConfig solver() const {
        SolverConfig c;
        c.bits = bits;
        c.iterations = iterations;
        c.init = init;
        c.precond = precond;
        c.seed = seed;
        c.threads = threads;
        return c;
    }

    void validate() const {
        try {
            solver().validate();
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
        if (method == Method::ganq_star && !(outlier_ratio > 0.0 && outlier_ratio < 1.0)) {
            throw ConfigError("--outlier-ratio must lie in (0, 1)");
        }
        if (weights.synthetic() && (weights.rows == 0 || weights.cols == 0)) {
            throw ConfigError("synthetic weights need --rows and --cols");
        }
    }

    nlohmann::json to_json() const {
        return {{"weights", weights.to_json()},
                {"calib", calib.to_json()},
                {"method", to_string(method)},
                {"bits", bits},
                {"iterations", iterations},
                {"outlier_ratio", outlier_ratio},
                {"precondition", precond.to_string()},
                {"init", to_string(init)},
                {"seed", seed},
                {"threads", threads},
                {"value_dtype", to_string(value_type)}};
    }
};

inline DenseMatrix load_weights(const MatrixSource& src) {
    if (!src.synthetic()) return load_matrix(src.path);
    return random_matrix(src.rows, src.cols, src.dist, src.seed);
}

inline DenseMatrix load_calibration(const MatrixSource& src, std::size_t n) {
    if (!src.synthetic()) {
        DenseMatrix x = load_matrix(src.path);
        if (x.rows() != n) {
            throw ArgumentError("calibration matrix has " + std::to_string(x.rows()) + " rows, weights have " +
                                std::to_string(n) + " columns");
        }
        return x;
    }
    return random_matrix(n, src.cols == 0 ? 8 * n : src.cols, src.dist, src.seed);
}

struct MethodRun {
    QuantizedLayer layer;
    /// ||WX - W~X||_F^2 with W~ the full reconstruction (outliers included).
    double objective = 0.0;
    std::optional<SolveTrace> trace;
    double seconds = 0.0;
};

inline MethodRun run_method(const DenseMatrix& w, const DenseMatrix& x, const RunConfig& cfg) {
    cfg.validate();
    detail::Stopwatch sw;
    LayerMeta meta{to_string(cfg.method), cfg.precond.to_string(), 0, cfg.value_type};
    MethodRun run;
    switch (cfg.method) {
        case Method::ganq: {
            auto res = solve(w, x, cfg.solver());
            meta.iterations = cfg.iterations;
            run.layer = make_layer(res.weights, cfg.bits, meta);
            run.trace = std::move(res.trace);
            break;
        }
        case Method::ganq_star: {
            auto split = split_outliers(w, cfg.outlier_ratio, cfg.threads);
            auto res = solve(split.dense, x, cfg.solver());
            meta.iterations = cfg.iterations;
            run.layer = make_layer(res.weights, cfg.bits, meta, std::move(split.sparse));
            run.trace = std::move(res.trace);
            break;
        }
        case Method::rtn:
            meta.precondition = "none";
            run.layer = make_layer(rtn_quantize(w, cfg.bits), cfg.bits, meta);
            break;
        case Method::kmeans:
            meta.precondition = "none";
            run.layer = make_layer(kmeans_quantize(w, cfg.bits, cfg.seed), cfg.bits, meta);
            break;
        case Method::oracle:
            if (!oracle_feasible(w.cols(), cfg.bits)) {
                throw ConfigError("oracle method requires (2^N)^n <= 65536");
            }
            meta.precondition = "none";
            run.layer = make_layer(exhaustive_quantize(w, x, cfg.bits), cfg.bits, meta);
            break;
    }
    run.seconds = sw.seconds();
    run.objective = output_error(w, dequantize(run.layer), x, cfg.threads);
    return run;
}

inline void write_text(const std::string& path, const std::string& text) {
    detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::map<std::string, double> storage_summary(const QuantizedLayer& layer) {
    const std::uint64_t fp16 = storage_bytes(layer.m, layer.n, layer.bits, StorageScheme::fp16);
    const std::uint64_t lut = storage_bytes(layer.m, layer.n, layer.bits, StorageScheme::lut, layer.outlier_nnz());
    const std::uint64_t uni = storage_bytes(layer.m, layer.n, layer.bits, StorageScheme::uniform);
    return {{"bytes", static_cast<double>(lut)},
            {"fp16_bytes", static_cast<double>(fp16)},
            {"uniform_bytes", static_cast<double>(uni)},
            {"percent_of_fp16", percent_of_fp16(lut, layer.m, layer.n)},
            {"outlier_nnz", static_cast<double>(layer.outlier_nnz())}};
}

/// Quantizes one layer, optionally writing the GQL1 container and the JSON
/// report. Returns the report.
inline Report cmd_quantize(const RunConfig& cfg) {
    cfg.validate();
    detail::Stopwatch total;
    const DenseMatrix w = load_weights(cfg.weights);
    const DenseMatrix x = load_calibration(cfg.calib, w.cols());
    MethodRun run = run_method(w, x, cfg);

    Report r;
    r.command = "quantize";
    r.method = to_string(cfg.method);
    r.bits = cfg.bits;
    r.config = cfg.to_json();
    r.shape = {{"m", w.rows()}, {"n", w.cols()}, {"p", x.cols()}};
    r.final_objective = run.objective;
    const QuantizedLayer stored = round_to_storage(run.layer);
    r.stored_objective = output_error(w, dequantize(stored), x, cfg.threads);
    r.timings["method"] = run.seconds;
    if (run.trace) {
        const SolveTrace& t = *run.trace;
        r.initial_objective = t.initial_objective;
        r.objectives = t.objectives;
        r.timings["gram"] = t.timings.gram;
        r.timings["cholesky"] = t.timings.cholesky;
        r.timings["init"] = t.timings.init;
        r.timings["assign"] = t.timings.assign;
        r.timings["refit"] = t.timings.refit;
        r.timings["objective"] = t.timings.objective;
        r.extra["trace"] = {{"degenerate_rows", t.degenerate_rows}, {"warnings", t.warnings}};
    }
    r.storage = storage_summary(run.layer);
    if (!cfg.output_path.empty()) save_layer(run.layer, cfg.output_path);
    r.timings["total"] = total.seconds();
    if (!cfg.report_path.empty()) write_text(cfg.report_path, r.to_json().dump(2) + "\n");
    return r;
}

struct EvalConfig {
    std::string layer_path;
    std::string calib_path;
    std::string weights_path;
    std::size_t threads = 1;
    std::string report_path;
};

inline Report cmd_eval(const EvalConfig& cfg) {
    if (cfg.weights_path.empty()) {
        throw ConfigError("eval needs the original weights (--weights) for the reference term W X");
    }
    if (cfg.layer_path.empty() || cfg.calib_path.empty()) throw ConfigError("eval needs --layer and --calib");
    const QuantizedLayer layer = load_layer(cfg.layer_path);
    const DenseMatrix x = load_matrix(cfg.calib_path);
    const DenseMatrix w = load_matrix(cfg.weights_path);
    if (w.rows() != layer.m || w.cols() != layer.n) throw ArgumentError("eval: weights shape differs from layer");
    if (x.rows() != layer.n) throw ArgumentError("eval: calibration rows differ from layer columns");

    Report r;
    r.command = "eval";
    r.method = layer.meta.method;
    r.bits = layer.bits;
    r.config = {{"layer", cfg.layer_path}, {"calib", cfg.calib_path}, {"weights", cfg.weights_path},
                {"threads", cfg.threads}};
    r.shape = {{"m", layer.m}, {"n", layer.n}, {"p", x.cols()}};
    r.final_objective = output_error(w, dequantize(layer), x, cfg.threads);

    const DenseMatrix reference = matmul(w, x);
    detail::Stopwatch sw;
    const DenseMatrix lut = lut_gemm(layer, x, cfg.threads);
    r.timings["lut_gemm"] = sw.seconds();
    sw = {};
    const DenseMatrix deq = dequant_gemm(layer, x, cfg.threads);
    r.timings["dequant_gemm"] = sw.seconds();
    sw = {};
    (void)dense_gemm_f32(w, x, cfg.threads);
    r.timings["dense_gemm_f32"] = sw.seconds();
    r.extra["kernel"] = {{"lut_gemm_error", frobenius_error(reference, lut)},
                         {"dequant_gemm_error", frobenius_error(reference, deq)},
                         {"paths_bitwise_equal", lut == deq}};
    r.storage = storage_summary(layer);
    if (!cfg.report_path.empty()) write_text(cfg.report_path, r.to_json().dump(2) + "\n");
    return r;
}

struct CompareRow {
    std::string label;
    std::string method;
    int bits = 0;
    double objective = 0.0;
    std::uint64_t storage_bytes = 0;
    double percent_of_fp16 = 0.0;
    double seconds = 0.0;
};

inline CompareRow make_row(std::string label, const RunConfig& cfg, const MethodRun& run) {
    const std::uint64_t bytes = cfg.method == Method::rtn
                                    ? storage_bytes(run.layer.m, run.layer.n, cfg.bits, StorageScheme::uniform)
                                    : storage_bytes(run.layer.m, run.layer.n, cfg.bits, StorageScheme::lut,
                                                    run.layer.outlier_nnz());
    return {std::move(label), to_string(cfg.method), cfg.bits, run.objective, bytes,
            percent_of_fp16(bytes, run.layer.m, run.layer.n), run.seconds};
}

inline std::string to_csv(const std::vector<CompareRow>& rows) {
    std::ostringstream os;
    os << "label,method,bits,objective,storage_bytes,percent_of_fp16,seconds\n";
    for (const auto& r : rows) {
        os << r.label << ',' << r.method << ',' << r.bits << ',' << std::setprecision(17) << r.objective << ','
           << r.storage_bytes << ',' << std::fixed << std::setprecision(2) << r.percent_of_fp16 << ','
           << std::defaultfloat << std::setprecision(6) << r.seconds << '\n';
    }
    return os.str();
}

/// Runs every method on identical (W, X). Rows come back ordered by objective
/// ascending; an oracle row within 1e-12 relative of the minimum goes first
/// (it is the global optimum, so anything below it is rounding).
inline std::vector<CompareRow> cmd_compare(const RunConfig& base, const std::vector<Method>& methods) {
    if (methods.empty()) throw ConfigError("compare needs at least one method");
    const DenseMatrix w = load_weights(base.weights);
    const DenseMatrix x = load_calibration(base.calib, w.cols());
    std::vector<CompareRow> rows;
    for (Method m : methods) {
        RunConfig cfg = base;
        cfg.method = m;
        rows.push_back(make_row(to_string(m), cfg, run_method(w, x, cfg)));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const CompareRow& a, const CompareRow& b) { return a.objective < b.objective; });
    auto oracle = std::find_if(rows.begin(), rows.end(), [](const CompareRow& r) { return r.method == "oracle"; });
    if (oracle != rows.end() && oracle != rows.begin() &&
        oracle->objective <= rows.front().objective * (1.0 + 1e-12)) {
        std::rotate(rows.begin(), oracle, oracle + 1);
    }
    if (!base.report_path.empty()) write_text(base.report_path, to_csv(rows));
    return rows;
}

inline const std::vector<double>& sweep_lambdas() {
    static const std::vector<double> values{0.5, 1.0, 10.0, 40.0, 100.0};
    return values;
}

/// The solver under each fixed lambda followed by adaptive preconditioning,
/// one row each, in that order.
inline std::vector<CompareRow> cmd_sweep_lambda(const RunConfig& base) {
    const DenseMatrix w = load_weights(base.weights);
    const DenseMatrix x = load_calibration(base.calib, w.cols());
    std::vector<PrecondPolicy> policies;
    for (double l : sweep_lambdas()) policies.push_back(PrecondPolicy::fixed(l));
    policies.push_back(PrecondPolicy::adaptive());
    std::vector<CompareRow> rows;
    for (const auto& p : policies) {
        RunConfig cfg = base;
        if (cfg.method != Method::ganq_star) cfg.method = Method::ganq;
        cfg.precond = p;
        rows.push_back(make_row(p.to_string(), cfg, run_method(w, x, cfg)));
    }
    if (!base.report_path.empty()) write_text(base.report_path, to_csv(rows));
    return rows;
}

/// Metadata and storage accounting of a stored layer.
inline nlohmann::json pack_info(const std::string& layer_path) {
    const QuantizedLayer layer = load_layer(layer_path);
    nlohmann::json j = layer_metadata(layer);
    j["storage"] = storage_summary(layer);
    j["file_bytes"] = std::filesystem::file_size(layer_path);
    return j;
}

/// Storage accounting for an m x n matrix at N bits under every scheme.
inline nlohmann::json storage_table(std::uint64_t m, std::uint64_t n, int bits, std::uint64_t nnz = 0) {
    nlohmann::json j = {{"rows", m}, {"cols", n}, {"bits", bits}, {"outlier_nnz", nnz}};
    for (auto s : {StorageScheme::fp16, StorageScheme::uniform, StorageScheme::lut}) {
        const std::uint64_t b = storage_bytes(m, n, bits, s, s == StorageScheme::lut ? nnz : 0);
        j[to_string(s)] = {{"bytes", b}, {"percent_of_fp16", percent_of_fp16(b, m, n)}};
    }
    return j;
}

}  // namespace lutq
