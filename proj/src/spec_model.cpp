#include "bench/spec_model.hpp"

#include <charconv>
#include <cmath>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "bench/error.hpp"
#include "bench/util.hpp"

extern char** environ;

namespace bench {

namespace {

std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  auto t = trim(s);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<double> to_double(std::string_view s) {
  auto t = trim(s);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string format_number(double v) {
  if (v == 0) return "0";
  return fmt::format("{}", v);
}

std::vector<std::string> evaluate_generator(const std::string& fn, const std::string& args_text,
                                            const std::string& source) {
  auto args = split(args_text, ',');
  for (auto& a : args) a = trim(a);
  auto fail = [&](const std::string& why) { return ValidationError("generator '" + source + "': " + why); };
  std::vector<std::string> out;

  if (fn == "repeat") {
    if (args.size() != 1) throw fail("repeat(n) takes one argument");
    auto n = to_int(args[0]);
    if (!n || *n < 1) throw fail("repeat count must be a positive integer");
    for (long long i = 1; i <= *n; ++i) out.push_back(std::to_string(i));
    return out;
  }

  if (fn == "range") {
    if (args.size() < 2 || args.size() > 3) throw fail("range(start, stop[, step]) takes 2 or 3 arguments");
    bool all_int = true;
    for (auto& a : args) all_int = all_int && to_int(a).has_value();
    if (all_int) {
      long long a = *to_int(args[0]), b = *to_int(args[1]), step = args.size() == 3 ? *to_int(args[2]) : 1;
      if (step == 0) throw fail("step must be non-zero");
      for (long long v = a; step > 0 ? v < b : v > b; v += step) out.push_back(std::to_string(v));
    } else {
      std::vector<double> xs;
      for (auto& a : args) {
        auto d = to_double(a);
        if (!d) throw fail("argument '" + a + "' is not a number");
        xs.push_back(*d);
      }
      double step = xs.size() == 3 ? xs[2] : 1.0;
      if (step == 0) throw fail("step must be non-zero");
      // index-based to avoid accumulated drift
      for (long long i = 0;; ++i) {
        double v = xs[0] + static_cast<double>(i) * step;
        if (step > 0 ? v >= xs[1] - 1e-12 : v <= xs[1] + 1e-12) break;
        out.push_back(format_number(v));
      }
    }
    if (out.empty()) throw fail("range is empty");
    return out;
  }

  if (fn == "linspace") {
    if (args.size() != 3) throw fail("linspace(start, stop, count) takes 3 arguments");
    auto a = to_double(args[0]), b = to_double(args[1]);
    auto n = to_int(args[2]);
    if (!a || !b) throw fail("bounds must be numbers");
    if (!n || *n < 1) throw fail("count must be a positive integer");
    if (*n == 1) return {format_number(*a)};
    for (long long i = 0; i < *n; ++i) {
      double v = i == *n - 1 ? *b : *a + (*b - *a) * static_cast<double>(i) / static_cast<double>(*n - 1);
      out.push_back(format_number(v));
    }
    return out;
  }
  throw fail("unknown generator function '" + fn + "'");
}

int line_of(const YAML::Node& n) { return n.Mark().line + 1; }
int column_of(const YAML::Node& n) { return n.Mark().column + 1; }

}  // namespace

std::string_view to_string(ValueSet::Kind k) {
  switch (k) {
    case ValueSet::Kind::single: return "single";
    case ValueSet::Kind::csv_multivalue: return "csv-multivalue";
    case ValueSet::Kind::explicit_list: return "explicit-list";
    case ValueSet::Kind::range: return "range";
    case ValueSet::Kind::generator: return "generator";
  }
  return "?";
}

std::string scalar_text(const YAML::Node& node) {
  if (!node || node.IsNull()) return "null";
  return node.Scalar();
}

ValueSet parse_value_set(const YAML::Node& node) {
  ValueSet vs;
  if (!node || node.IsNull()) {
    vs.kind = ValueSet::Kind::explicit_list;
    return vs;
  }
  if (node.IsSequence()) {
    vs.kind = ValueSet::Kind::explicit_list;
    YAML::Emitter em;
    em << YAML::Flow << node;
    vs.source = em.c_str();
    for (const auto& item : node) {
      if (!item.IsScalar()) throw ValidationError(fmt::format("list entry at line {} is not a scalar", line_of(item)));
      vs.values.push_back(item.Scalar());
    }
    return vs;
  }
  if (node.IsMap()) throw ValidationError(fmt::format("experiment value at line {} is a mapping", line_of(node)));

  vs.source = node.Scalar();
  const std::string text = trim(vs.source);

  static const std::regex generator_re(R"(^([A-Za-z_][A-Za-z0-9_]*)\((.*)\)$)");
  static const std::regex range_re(R"(^(-?\d+)\s*-\s*(-?\d+)(?::(\d+))?$)");
  std::smatch m;

  if (std::regex_match(text, m, generator_re)) {
    vs.kind = ValueSet::Kind::generator;
    vs.values = evaluate_generator(m[1].str(), m[2].str(), text);
    return vs;
  }
  if (text.find(',') != std::string::npos) {
    vs.kind = ValueSet::Kind::csv_multivalue;
    for (auto& item : split(text, ',')) {
      auto t = trim(item);
      if (t.empty()) throw ValidationError("empty item in multi-value '" + vs.source + "'");
      vs.values.push_back(t);
    }
    return vs;
  }
  if (std::regex_match(text, m, range_re)) {
    long long a = std::stoll(m[1].str()), b = std::stoll(m[2].str());
    long long step = m[3].matched ? std::stoll(m[3].str()) : 1;
    if (a <= b) {
      if (step <= 0) throw ValidationError("range step must be positive in '" + text + "'");
      vs.kind = ValueSet::Kind::range;
      for (long long v = a; v <= b; v += step) vs.values.push_back(std::to_string(v));
      return vs;
    }
  }
  vs.kind = ValueSet::Kind::single;
  vs.values.push_back(vs.source);
  return vs;
}

const ValueSet* ExperimentSpec::axis(std::string_view name) const {
  for (const auto& [k, v] : experiment)
    if (k == name) return &v;
  return nullptr;
}

const std::string* ExperimentPoint::value(std::string_view name) const {
  for (const auto& [k, v] : assignments)
    if (k == name) return &v;
  return nullptr;
}

void check_duplicate_keys(const YAML::Node& node, const std::string& where) {
  if (node.IsMap()) {
    std::set<std::string> seen;
    for (const auto& kv : node) {
      const auto key = kv.first.IsScalar() ? kv.first.Scalar() : std::string("<complex>");
      const auto path = where.empty() ? key : where + "." + key;
      if (!seen.insert(key).second)
        throw ValidationError(fmt::format("duplicate key '{}' at line {}", path, line_of(kv.first)));
      check_duplicate_keys(kv.second, path);
    }
  } else if (node.IsSequence()) {
    std::size_t i = 0;
    for (const auto& item : node) check_duplicate_keys(item, where + "[" + std::to_string(i++) + "]");
  }
}

ExperimentSpec parse_spec(std::string_view text) {
  ExperimentSpec spec;
  spec.text = std::string(text);
  try {
    spec.raw = YAML::Load(spec.text);
  } catch (const YAML::ParserException& e) {
    throw ParseError("malformed YAML: " + e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  if (!spec.raw.IsMap()) throw ValidationError("spec document must be a mapping at top level");
  check_duplicate_keys(spec.raw);
  const YAML::Node& root = spec.raw;

  const auto app = root["application"];
  if (!app || !app.IsMap()) throw ValidationError("spec needs an 'application' mapping");
  for (const auto& kv : app) {
    const auto key = kv.first.Scalar();
    if (!kv.second.IsScalar() && !kv.second.IsNull())
      throw ValidationError(fmt::format("application.{} (line {}) must be a scalar", key, line_of(kv.second)));
    spec.application.emplace_back(key, scalar_text(kv.second));
  }
  if (!app["name"]) throw ValidationError("application.name is required");

  if (const auto data = root["data"]) {
    if (!data.IsScalar()) throw ValidationError("'data' must be a path template string");
    spec.data = data.Scalar();
  }
  if (const auto sys = root["system"]) {
    if (!sys.IsMap() && !sys.IsNull()) throw ValidationError("'system' must be a mapping");
    spec.system = sys;
  }
  if (const auto exp = root["experiment"]) {
    if (!exp.IsMap() && !exp.IsNull()) throw ValidationError("'experiment' must be a mapping");
    if (exp.IsMap()) {
      for (const auto& kv : exp) {
        const auto key = kv.first.Scalar();
        if (!is_identifier(key))
          throw ValidationError(fmt::format("parameter name '{}' (line {}, column {}) is not an identifier", key,
                                            line_of(kv.first), column_of(kv.first)));
        spec.experiment.emplace_back(key, parse_value_set(kv.second));
      }
    }
  }
  return spec;
}

std::vector<ExperimentPoint> expand_grid(const ExperimentSpec& spec, ExpandOptions opts) {
  std::size_t total = 1;
  for (const auto& [name, vs] : spec.experiment) {
    if (vs.values.empty()) throw ValidationError("experiment parameter '" + name + "' has no values");
    if (total > opts.max_points / vs.values.size() + 1) {
      total = opts.max_points + 1;
    } else {
      total *= vs.values.size();
    }
  }
  if (total > opts.max_points) {
    long double exact = 1;
    for (const auto& [name, vs] : spec.experiment) exact *= static_cast<long double>(vs.values.size());
    throw ValidationError(fmt::format("grid has {:.0f} points, exceeding the cap of {}", static_cast<double>(exact),
                                      opts.max_points));
  }

  std::vector<ExperimentPoint> points;
  points.reserve(total);
  std::vector<std::size_t> digit(spec.experiment.size(), 0);
  for (std::size_t ordinal = 0; ordinal < total; ++ordinal) {
    ExperimentPoint p;
    p.ordinal = ordinal;
    for (std::size_t k = 0; k < digit.size(); ++k)
      p.assignments.emplace_back(spec.experiment[k].first, spec.experiment[k].second.values[digit[k]]);
    p.id = experiment_id(p.assignments);
    points.push_back(std::move(p));
    // last key is the fastest digit
    for (std::size_t k = digit.size(); k-- > 0;) {
      if (++digit[k] < spec.experiment[k].second.values.size()) break;
      digit[k] = 0;
    }
  }
  return points;
}

std::string experiment_id(const Assignments& assignments) {
  if (assignments.empty()) return "default";
  std::string id;
  for (const auto& [k, v] : assignments) {
    if (!id.empty()) id += '-';
    id += k;
    id += '_';
    for (char c : v) {
      const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_';
      id += keep ? c : '-';
    }
  }
  return id;
}

VarMap environment_map() {
  VarMap env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  return env;
}

std::string resolve_variable(std::string_view path, const ExperimentPoint& point, const ExperimentSpec& spec,
                             const VarMap& env, const VarMap& db) {
  const std::string full(path);
  auto segments = split(path, '.');
  for (const auto& s : segments)
    if (s.empty()) throw UndefinedVariable(full);
  const auto& head = segments.front();
  const auto rest = full.size() > head.size() ? full.substr(head.size() + 1) : std::string();

  if (head == "experiment") {
    if (segments.size() == 1) throw NotAScalar(full);
    if (segments.size() > 2) throw UndefinedVariable(full);
    if (const auto* v = point.value(rest)) return *v;
    throw UndefinedVariable(full);
  }
  if (head == "os") {
    if (rest.empty()) throw NotAScalar(full);
    if (auto it = env.find(rest); it != env.end()) return it->second;
    // Python-style os attributes that templates in the wild refer to.
    if (rest == "name") return "posix";
    throw UndefinedVariable(full);
  }
  if (head == "db" || head == "cloudmesh") {
    if (rest.empty()) throw NotAScalar(full);
    if (auto it = db.find(rest); it != db.end()) return it->second;
    throw UndefinedVariable(full);
  }

  // Descend through const handles: non-const operator[] inserts keys and
  // operator= rebinds shared node data, so use reset() to move the cursor.
  YAML::Node cur;
  cur.reset(spec.raw);
  for (const auto& seg : segments) {
    const YAML::Node& here = cur;
    if (here.IsMap()) {
      const YAML::Node child(here[seg]);
      if (!child) throw UndefinedVariable(full);
      cur.reset(child);
    } else if (here.IsSequence()) {
      auto idx = to_int(seg);
      if (!idx || *idx < 0 || static_cast<std::size_t>(*idx) >= here.size()) throw UndefinedVariable(full);
      const YAML::Node child(here[static_cast<std::size_t>(*idx)]);
      cur.reset(child);
    } else {
      throw UndefinedVariable(full);
    }
  }
  if (cur.IsMap() || cur.IsSequence()) throw NotAScalar(full);
  return scalar_text(cur);
}

}  // namespace bench
