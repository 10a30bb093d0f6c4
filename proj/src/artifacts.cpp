#include "cnnsplit/artifacts.hpp"

#include <fstream>
#include <sstream>

#include "cnnsplit/error.hpp"
#include "json.hpp"

namespace cnnsplit {

using nlohmann::json;

namespace {

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::invalid, std::string(what) + ": " + e.what());
  }
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::invalid, std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string importance_to_json(const ImportanceTable& t) {
  json j;
  j["kind"] = "importance";
  j["classes"] = t.per_class;
  return j.dump(1);
}

ImportanceTable importance_from_json(const std::string& text) {
  return guarded("importance table", [&] {
    const json j = parse(text, "importance table");
    ImportanceTable t;
    t.per_class = j.at("classes").get<std::vector<LayerScores>>();
    return t;
  });
}

std::string grouping_to_json(const GroupingMap& g) {
  json j;
  j["kind"] = "grouping";
  j["mode"] = to_string(g.mode);
  j["layer_kernels"] = g.layer_kernels;
  j["segments"] = g.layout.members;
  j["segment_groups"] = g.layout.groups;
  j["groups"] = g.groups;
  return j.dump(1);
}

GroupingMap grouping_from_json(const std::string& text) {
  return guarded("grouping map", [&] {
    const json j = parse(text, "grouping map");
    GroupingMap g;
    g.mode = parse_grouping_mode(j.at("mode").get<std::string>());
    g.layer_kernels = j.at("layer_kernels").get<std::vector<int>>();
    g.layout.members = j.at("segments").get<std::vector<std::vector<int>>>();
    g.layout.groups = j.at("segment_groups").get<std::vector<int>>();
    g.groups = j.at("groups").get<std::vector<std::vector<std::vector<std::vector<int>>>>>();
    g.layout.segment_of.assign(g.layer_kernels.size(), -1);
    int bit = 0;
    for (std::size_t s = 0; s < g.layout.members.size(); ++s) {
      for (int c : g.layout.members[s]) g.layout.segment_of.at(c) = static_cast<int>(s);
      g.layout.offset.push_back(bit);
      bit += g.layout.groups.at(s);
    }
    g.layout.total_bits = bit;
    return g;
  });
}

std::string sensitivity_to_json(const SensitivityProfile& p) {
  json j;
  j["kind"] = "sensitivity";
  j["baseline_accuracy"] = p.baseline_accuracy;
  j["threshold"] = p.threshold;
  j["ratios"] = p.ratios;
  j["accuracy"] = p.accuracy;
  std::vector<int> flags(p.sensitive.begin(), p.sensitive.end());
  j["sensitive"] = flags;
  return j.dump(1);
}

SensitivityProfile sensitivity_from_json(const std::string& text) {
  return guarded("sensitivity profile", [&] {
    const json j = parse(text, "sensitivity profile");
    SensitivityProfile p;
    p.baseline_accuracy = j.at("baseline_accuracy").get<double>();
    p.threshold = j.at("threshold").get<double>();
    p.ratios = j.at("ratios").get<std::vector<double>>();
    p.accuracy = j.at("accuracy").get<std::vector<std::vector<double>>>();
    for (int f : j.at("sensitive").get<std::vector<int>>()) p.sensitive.push_back(f != 0);
    return p;
  });
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

}  // namespace cnnsplit
