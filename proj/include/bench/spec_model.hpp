#pragma once

// Experiment specification files: parsing, value sets, grid expansion and
// dot-path variable resolution.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

namespace bench {

/// Ordered name -> canonical scalar text.
using Assignments = std::vector<std::pair<std::string, std::string>>;
using VarMap = std::map<std::string, std::string>;

struct ValueSet {
  enum class Kind { single, csv_multivalue, explicit_list, range, generator };

  Kind kind = Kind::single;
  std::vector<std::string> values;
  std::string source;

  bool operator==(const ValueSet&) const = default;
};

std::string_view to_string(ValueSet::Kind k);

/// Materializes one experiment entry. Throws ValidationError on malformed
/// ranges/generators or non-scalar list members.
ValueSet parse_value_set(const YAML::Node& node);

struct ExperimentSpec {
  Assignments application;
  std::optional<std::string> data;
  std::vector<std::pair<std::string, ValueSet>> experiment;
  YAML::Node system;
  YAML::Node raw;
  std::string text;

  const ValueSet* axis(std::string_view name) const;
};

struct ExperimentPoint {
  Assignments assignments;
  std::string id;
  std::size_t ordinal = 0;

  bool operator==(const ExperimentPoint&) const = default;
  const std::string* value(std::string_view name) const;
};

/// Throws ParseError (malformed YAML, with line/column) or ValidationError.
ExperimentSpec parse_spec(std::string_view text);

struct ExpandOptions {
  std::size_t max_points = 100000;
};

/// Cartesian product in odometer order: the first key varies slowest.
std::vector<ExperimentPoint> expand_grid(const ExperimentSpec& spec, ExpandOptions opts = {});

/// key1_value1-key2_value2-... with values sanitized to [A-Za-z0-9._];
/// "default" for an empty assignment.
std::string experiment_id(const Assignments& assignments);

/// Namespaces: experiment.* (point), os.* (env), db.* / cloudmesh.* (db),
/// anything else descends the raw spec document.
std::string resolve_variable(std::string_view path, const ExperimentPoint& point, const ExperimentSpec& spec,
                             const VarMap& env, const VarMap& db);

/// Snapshot of the process environment.
VarMap environment_map();

/// Throws ValidationError listing every duplicated key path in the document.
void check_duplicate_keys(const YAML::Node& node, const std::string& where = "");

/// Canonical scalar text of a YAML scalar node ("null" for null).
std::string scalar_text(const YAML::Node& node);

}  // namespace bench
