#pragma once

#include "encp/encp_model.hpp"
#include "encp/metrics.hpp"

#include <json.hpp>

#include <string>

namespace encp {

using json = nlohmann::json;

/// CSV with a header row; values written with 17 significant digits.
void write_csv(const std::string& path, const std::vector<std::string>& header, const Mat& values);
Mat read_csv(const std::string& path, std::vector<std::string>* header = nullptr);

/// Dataset as <dir>/data.csv (x_0.., y_0..) plus <dir>/data.json sidecar.
void write_dataset(const std::string& dir, const Dataset& data, const json& sidecar);
Dataset read_dataset(const std::string& dir, json* sidecar = nullptr);

void write_json(const std::string& path, const json& j);
json read_json(const std::string& path);

/// One line of JSON, a newline, then little-endian float64 payload.
void write_checkpoint(const std::string& path, const json& header, const Vec& payload);
Vec read_checkpoint(const std::string& path, json* header = nullptr);

json representation_to_json(const GroupRepresentation& rep);
GroupRepresentation representation_from_json(const GroupPtr& group, const json& j);

/// Model checkpoint embedding group label, layouts, representations, Q and centers.
void save_model(const std::string& path, const EncpModel& model, const json& extra = json::object());
EncpModel load_model(const std::string& path, json* header = nullptr);

json loss_terms_to_json(const LossTerms& t);
json history_to_json(const TrainHistory& h);
json coverage_to_json(const CoverageStats& c);

}  // namespace encp
