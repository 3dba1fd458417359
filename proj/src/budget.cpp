#include "alrank/budget.hpp"

#include <cctype>
#include <json.hpp>
#include <sstream>

namespace alrank {

void CostConfig::validate() const {
  if (!(assessments_per_hour > 0)) throw Error("cost: assessments_per_hour must be > 0");
  if (!(annotator_cost_per_hour > 0)) throw Error("cost: annotator_cost_per_hour must be > 0");
  if (!(gpu_cost_per_hour > 0)) throw Error("cost: gpu_cost_per_hour must be > 0");
  if (!(cpu_cost_per_hour > 0)) throw Error("cost: cpu_cost_per_hour must be > 0");
  if (!(training_hours_per_triplet_epoch >= 0)) throw Error("cost: training_hours_per_triplet_epoch must be >= 0");
  for (const auto& [s, h] : selection_hours)
    if (!(h >= 0)) throw Error("cost: selection hours for " + to_string(s) + " must be >= 0");
}

double CostConfig::selection_hours_for(Strategy s) const {
  auto it = selection_hours.find(s);
  return it == selection_hours.end() ? 0.0 : it->second;
}

double annotation_cost(std::uint64_t assessments, const CostConfig& config) {
  return static_cast<double>(assessments) / config.assessments_per_hour * config.annotator_cost_per_hour;
}

double compute_cost(double gpu_hours, int iteration, double cpu_hours, const CostConfig& config) {
  if (iteration < 1) throw Error("compute_cost: iteration must be >= 1");
  return gpu_hours * config.gpu_cost_per_hour + cpu_hours * config.cpu_cost_per_hour * (iteration - 1);
}

void TimeLedger::record(double training_hours, double selection_hours) {
  if (!(training_hours >= 0) || !(selection_hours >= 0)) throw Error("time ledger: hours must be >= 0");
  training_.push_back(training_hours);
  selection_.push_back(selection_hours);
}

double TimeLedger::gpu_hours(int iteration) const {
  if (iteration < 0 || iteration > iterations()) throw Error("time ledger: iteration out of range");
  double acc = 0;
  for (int i = 0; i < iteration; ++i) acc += training_[i];
  return acc;
}

double TimeLedger::mean_selection_hours() const {
  // Iteration 1 selects randomly and carries no selection cost.
  if (selection_.size() < 2) return 0;
  double acc = 0;
  for (std::size_t i = 1; i < selection_.size(); ++i) acc += selection_[i];
  return acc / static_cast<double>(selection_.size() - 1);
}

std::string CostReport::to_csv() const {
  std::string out = "iteration,assessments,C_A,C_C,C_total\n";
  for (const auto& r : rows)
    out += std::to_string(r.iteration) + "," + std::to_string(r.assessments) + "," + format_double(r.annotation) +
           "," + format_double(r.compute) + "," + format_double(r.total) + "\n";
  return out;
}

CostReport total_cost(const std::vector<std::uint64_t>& cumulative_assessments, const TimeLedger& time,
                      Strategy strategy, const CostConfig& config) {
  if (cumulative_assessments.size() != static_cast<std::size_t>(time.iterations()))
    throw Error("total_cost: assessment ledger has " + std::to_string(cumulative_assessments.size()) +
                " iterations but time ledger has " + std::to_string(time.iterations()));
  const double cpu_hours =
      config.measured_selection_hours ? time.mean_selection_hours() : config.selection_hours_for(strategy);
  CostReport report;
  for (int i = 1; i <= time.iterations(); ++i) {
    CostRow row;
    row.iteration = i;
    row.assessments = cumulative_assessments[i - 1];
    row.annotation = annotation_cost(row.assessments, config);
    row.compute = compute_cost(time.gpu_hours(i), i, cpu_hours, config);
    row.total = row.annotation + row.compute;
    report.rows.push_back(row);
  }
  return report;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double as_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("cost config: '" + key + "' expects a number, got '" + value + "'");
}

bool as_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("cost config: '" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace

void set_cost_option(CostConfig& c, const std::string& key, const std::string& value) {
  if (key == "assessments_per_hour" || key == "A_h") {
    c.assessments_per_hour = as_number(key, value);
  } else if (key == "annotator_cost_per_hour" || key == "A_C") {
    c.annotator_cost_per_hour = as_number(key, value);
  } else if (key == "gpu_cost_per_hour" || key == "G_h") {
    c.gpu_cost_per_hour = as_number(key, value);
  } else if (key == "cpu_cost_per_hour" || key == "C_h") {
    c.cpu_cost_per_hour = as_number(key, value);
  } else if (key == "selection_hours" || key == "H_CPU") {
    const double h = as_number(key, value);
    for (auto s : {Strategy::random, Strategy::uncertainty, Strategy::qbc, Strategy::diversity})
      c.selection_hours[s] = h;
  } else if (key.rfind("selection_hours.", 0) == 0) {
    c.selection_hours[parse_strategy(key.substr(16))] = as_number(key, value);
  } else if (key == "measured_selection_hours") {
    c.measured_selection_hours = as_bool(key, value);
  } else if (key == "measured_training_hours") {
    c.measured_training_hours = as_bool(key, value);
  } else if (key == "training_hours_per_triplet_epoch") {
    c.training_hours_per_triplet_epoch = as_number(key, value);
  } else {
    throw Error("cost config: unknown key '" + key + "'");
  }
}

CostConfig parse_cost_config(const std::string& content, const std::string& source) {
  CostConfig config;
  const std::string body = trim(content);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(source + ": " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        for (auto jt = it->begin(); jt != it->end(); ++jt)
          set_cost_option(config, it.key() + "." + jt.key(), jt->is_string() ? jt->get<std::string>() : jt->dump());
      } else {
        set_cost_option(config, it.key(), it->is_string() ? it->get<std::string>() : it->dump());
      }
    }
  } else {
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, lineno, "expected key = value");
      try {
        set_cost_option(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(source, lineno, e.what());
      }
    }
  }
  config.validate();
  return config;
}

std::string cost_config_to_json(const CostConfig& c) {
  nlohmann::ordered_json j;
  j["assessments_per_hour"] = c.assessments_per_hour;
  j["annotator_cost_per_hour"] = c.annotator_cost_per_hour;
  j["gpu_cost_per_hour"] = c.gpu_cost_per_hour;
  j["cpu_cost_per_hour"] = c.cpu_cost_per_hour;
  for (const auto& [s, h] : c.selection_hours) j["selection_hours"][to_string(s)] = h;
  j["measured_selection_hours"] = c.measured_selection_hours;
  j["measured_training_hours"] = c.measured_training_hours;
  j["training_hours_per_triplet_epoch"] = c.training_hours_per_triplet_epoch;
  return j.dump(2);
}

}  // namespace alrank
