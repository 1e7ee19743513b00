#pragma once

// Run reports. JSON key names are stable; see README "Report format".

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lutq/error.hpp"

namespace lutq {

struct Report {
    std::string command;
    std::string method;
    int bits = 0;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json shape = nlohmann::json::object();
    std::optional<double> initial_objective;
    std::vector<double> objectives;  // per iteration, solver methods only
    double final_objective = 0.0;
    std::optional<double> stored_objective;
    std::map<std::string, double> timings;
    std::map<std::string, double> storage;
    nlohmann::json extra = nlohmann::json::object();

    nlohmann::json to_json() const {
        auto check = [](double v) {
            if (!(v >= 0.0)) throw DataError("report: objective values must be non-negative");
            return v;
        };
        nlohmann::json obj = {{"final", check(final_objective)}};
        obj["per_iteration"] = nlohmann::json::array();
        for (double v : objectives) obj["per_iteration"].push_back(check(v));
        obj["initial"] = initial_objective ? nlohmann::json(check(*initial_objective)) : nlohmann::json();
        obj["stored"] = stored_objective ? nlohmann::json(check(*stored_objective)) : nlohmann::json();
        nlohmann::json j = {
            {"command", command}, {"method", method},    {"bits", bits},      {"config", config},
            {"shape", shape},     {"objective", obj},    {"timings_s", timings}, {"storage", storage},
        };
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        return j;
    }
};

}  // namespace lutq
