#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smile/explain.hpp"

namespace smile {

nlohmann::json config_to_json(const ExplainConfig& config);
/// Inverse of config_to_json; missing keys keep their defaults.
ExplainConfig config_from_json(const nlohmann::json& j);

/// Canonical JSON form of a report. Doubles are written in shortest
/// round-trip form, so the same report always serializes to the same bytes.
nlohmann::json report_to_json(const ExplanationReport& report);

/// Columns: token,coefficient,importance (17 significant digits).
std::string report_to_csv(const ExplanationReport& report);

/// Self-contained heatmap page: white -> dark red, linear in importance.
std::string report_to_html(const ExplanationReport& report);

struct Rgb {
    int r = 255, g = 255, b = 255;
};
Rgb heatmap_color(double importance);

/// Writes every file to a temporary sibling first and renames them into place
/// only after all writes succeeded.
void write_files_atomically(const std::vector<std::pair<std::filesystem::path, std::string>>& files);

}  // namespace smile
