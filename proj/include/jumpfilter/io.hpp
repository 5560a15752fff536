#ifndef JUMPFILTER_IO_HPP
#define JUMPFILTER_IO_HPP

#include <json.hpp>
#include <string>

#include "jumpfilter/filter.hpp"
#include "jumpfilter/history.hpp"
#include "jumpfilter/simulate.hpp"

namespace jumpfilter {

nlohmann::json history_to_json(const History& h);
History history_from_json(const nlohmann::json& j);

nlohmann::json system_path_to_json(const SystemPath& path);
nlohmann::json observation_to_json(const ObservationRecord& obs);
ObservationRecord observation_from_json(const nlohmann::json& j);

// CSV with a header row, time first, '.' decimal separator, 17 significant
// digits.
std::string y_samples_csv(const Grid& grid, const std::vector<double>& y);
std::string filter_trajectory_csv(const FilterRun& run);

nlohmann::json snapshots_to_json(const FilterRun& run);

std::string format_double(double v);  // 17 significant digits

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace jumpfilter

#endif
