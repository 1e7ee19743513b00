// Command-line front end: quantize, eval, compare, sweep-lambda, pack-info,
// generate. Exit codes: 0 ok, 2 config error, 3 format/I-O error, 4 numeric error.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lutq/lutq.hpp"

namespace {

struct SourceFlags {
    std::string weights;
    std::string weights_dist = "gauss";
    bool synthetic_weights = false;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string calib;
    std::string calib_dist = "gauss";
    std::size_t calib_p = 0;
    std::string method = "ganq";
    std::string precondition = "adaptive";
    std::string init = "uniform_grid";
    std::string value_dtype = "f16";
};

void add_run_flags(CLI::App* cmd, SourceFlags& f, lutq::RunConfig& cfg, bool with_method) {
    cmd->add_option("--weights", f.weights, "GQT weight matrix (m x n)");
    cmd->add_option("--synthetic-weights", f.weights_dist, "generate weights instead: gauss|heavy_tail_t3")
        ->each([&f](const std::string&) { f.synthetic_weights = true; });
    cmd->add_option("--rows", f.rows, "synthetic weight rows m");
    cmd->add_option("--cols", f.cols, "synthetic weight cols n");
    cmd->add_option("--calib", f.calib, "GQT calibration activations (n x p)");
    cmd->add_option("--calib-synthetic", f.calib_dist, "synthetic calibration distribution")->capture_default_str();
    cmd->add_option("--calib-p", f.calib_p, "synthetic calibration columns p (default 8n)");
    if (with_method) cmd->add_option("--method", f.method, "ganq|ganq_star|rtn|kmeans|oracle")->capture_default_str();
    cmd->add_option("--bits", cfg.bits, "bit width N")->capture_default_str();
    cmd->add_option("--iters", cfg.iterations, "solver iterations K")->capture_default_str();
    cmd->add_option("--outlier-ratio", cfg.outlier_ratio, "outlier extraction ratio r")->capture_default_str();
    cmd->add_option("--precondition", f.precondition, "adaptive|lambda=<v>|off")->capture_default_str();
    cmd->add_option("--init", f.init, "uniform_grid|kmeans_1d")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "seed for synthetic inputs")->capture_default_str();
    cmd->add_option("--threads", cfg.threads, "worker cap")->capture_default_str();
    cmd->add_option("--value-dtype", f.value_dtype, "stored codebook/outlier precision f16|f32|f64")
        ->capture_default_str();
    cmd->add_option("--report", cfg.report_path, "report output path");
}

lutq::RunConfig finish(const SourceFlags& f, lutq::RunConfig cfg) {
    try {
        if (!f.weights.empty() && f.synthetic_weights) {
            throw lutq::ConfigError("--weights and --synthetic-weights are mutually exclusive");
        }
        if (f.weights.empty() && !f.synthetic_weights) {
            throw lutq::ConfigError("one of --weights or --synthetic-weights is required");
        }
        cfg.weights.path = f.weights;
        cfg.weights.dist = lutq::parse_distribution(f.weights_dist);
        cfg.weights.rows = f.rows;
        cfg.weights.cols = f.cols;
        cfg.weights.seed = cfg.seed;
        cfg.calib.path = f.calib;
        cfg.calib.dist = lutq::parse_distribution(f.calib_dist);
        cfg.calib.cols = f.calib_p;
        cfg.calib.seed = cfg.seed + 1;
        cfg.method = lutq::parse_method(f.method);
        cfg.precond = lutq::PrecondPolicy::parse(f.precondition);
        cfg.init = lutq::parse_init_method(f.init);
        cfg.value_type = lutq::parse_value_type(f.value_dtype);
    } catch (const lutq::ArgumentError& e) {
        throw lutq::ConfigError(e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<lutq::Method> parse_methods(const std::vector<std::string>& names) {
    std::vector<lutq::Method> out;
    for (const auto& n : names) out.push_back(lutq::parse_method(n));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LUT-based non-uniform weight quantization toolkit"};
    app.require_subcommand(1);

    SourceFlags flags;
    lutq::RunConfig cfg;

    auto* quantize = app.add_subcommand("quantize", "quantize one layer and write a GQL1 container");
    add_run_flags(quantize, flags, cfg, true);
    quantize->add_option("--output", cfg.output_path, "GQL1 output path");

    lutq::EvalConfig eval_cfg;
    auto* eval = app.add_subcommand("eval", "evaluate a stored layer on activations");
    eval->add_option("--layer", eval_cfg.layer_path, "GQL1 layer")->required();
    eval->add_option("--calib", eval_cfg.calib_path, "GQT activations (n x p)")->required();
    eval->add_option("--weights", eval_cfg.weights_path, "original GQT weights for the reference term");
    eval->add_option("--threads", eval_cfg.threads, "worker cap");
    eval->add_option("--report", eval_cfg.report_path, "JSON report path");

    std::vector<std::string> methods{"oracle", "ganq", "ganq_star", "rtn", "kmeans"};
    auto* compare = app.add_subcommand("compare", "run several methods on identical inputs, CSV out");
    add_run_flags(compare, flags, cfg, false);
    compare->add_option("--methods", methods, "methods to run")->delimiter(',');

    auto* sweep = app.add_subcommand("sweep-lambda", "fixed-lambda vs adaptive preconditioning, CSV out");
    add_run_flags(sweep, flags, cfg, true);

    std::string info_layer;
    std::uint64_t info_rows = 0, info_cols = 0, info_nnz = 0;
    int info_bits = 4;
    auto* info = app.add_subcommand("pack-info", "container metadata or storage accounting");
    info->add_option("--layer", info_layer, "GQL1 layer to inspect");
    info->add_option("--rows", info_rows, "m for storage accounting");
    info->add_option("--cols", info_cols, "n for storage accounting");
    info->add_option("--bits", info_bits, "N for storage accounting");
    info->add_option("--nnz", info_nnz, "outlier count for storage accounting");

    std::string gen_dist = "gauss", gen_out, gen_precision = "f64";
    std::size_t gen_rows = 0, gen_cols = 0;
    std::uint64_t gen_seed = 0;
    auto* generate = app.add_subcommand("generate", "write a synthetic GQT matrix");
    generate->add_option("--dist", gen_dist, "gauss|heavy_tail_t3")->capture_default_str();
    generate->add_option("--rows", gen_rows)->required();
    generate->add_option("--cols", gen_cols)->required();
    generate->add_option("--seed", gen_seed)->capture_default_str();
    generate->add_option("--precision", gen_precision, "f32|f64")->capture_default_str();
    generate->add_option("--out", gen_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : lutq::exit_codes::config;
    }

    try {
        if (*quantize) {
            const auto r = lutq::cmd_quantize(finish(flags, cfg));
            std::cout << r.to_json().dump(2) << "\n";
        } else if (*eval) {
            std::cout << lutq::cmd_eval(eval_cfg).to_json().dump(2) << "\n";
        } else if (*compare) {
            const auto run = finish(flags, cfg);
            std::cout << lutq::to_csv(lutq::cmd_compare(run, parse_methods(methods)));
        } else if (*sweep) {
            std::cout << lutq::to_csv(lutq::cmd_sweep_lambda(finish(flags, cfg)));
        } else if (*info) {
            if (!info_layer.empty()) {
                std::cout << lutq::pack_info(info_layer).dump(2) << "\n";
            } else if (info_rows > 0 && info_cols > 0) {
                lutq::check_bits(info_bits);
                std::cout << lutq::storage_table(info_rows, info_cols, info_bits, info_nnz).dump(2) << "\n";
            } else {
                throw lutq::ConfigError("pack-info needs --layer or --rows/--cols");
            }
        } else if (*generate) {
            if (gen_rows == 0 || gen_cols == 0) throw lutq::ConfigError("generate needs non-zero --rows/--cols");
            const auto precision = gen_precision == "f32" ? lutq::Precision::f32 : lutq::Precision::f64;
            if (gen_precision != "f32" && gen_precision != "f64") throw lutq::ConfigError("--precision is f32|f64");
            const auto m = lutq::random_matrix(gen_rows, gen_cols, lutq::parse_distribution(gen_dist), gen_seed);
            lutq::save_matrix(lutq::DenseMatrix(m.rows(), m.cols(), {m.elems().begin(), m.elems().end()}, precision),
                              gen_out);
        }
    } catch (const lutq::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return lutq::exit_codes::config;
    } catch (const lutq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return lutq::exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return lutq::exit_codes::ok;
}
