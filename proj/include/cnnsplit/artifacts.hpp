#pragma once

#include <string>

#include "cnnsplit/grouping.hpp"
#include "cnnsplit/importance.hpp"
#include "cnnsplit/sensitivity.hpp"

namespace cnnsplit {

// Text (JSON) forms of the analysis stage outputs, cached between CLI stages.

std::string importance_to_json(const ImportanceTable& t);
ImportanceTable importance_from_json(const std::string& text);

std::string grouping_to_json(const GroupingMap& g);
GroupingMap grouping_from_json(const std::string& text);

std::string sensitivity_to_json(const SensitivityProfile& p);
SensitivityProfile sensitivity_from_json(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace cnnsplit
