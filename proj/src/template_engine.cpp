#include "bench/template_engine.hpp"

#include <fmt/format.h>

#include "bench/util.hpp"

namespace bench {

namespace {

class PositionTracker {
 public:
  explicit PositionTracker(std::string_view text) : text_(text) {}

  TextPosition at(std::size_t offset) {
    for (; cursor_ < offset; ++cursor_) {
      if (text_[cursor_] == '\n') {
        ++pos_.line;
        pos_.column = 1;
      } else {
        ++pos_.column;
      }
    }
    pos_.offset = offset;
    return pos_;
  }

 private:
  std::string_view text_;
  std::size_t cursor_ = 0;
  TextPosition pos_;
};

}  // namespace

bool is_dot_path(std::string_view s) {
  if (s.empty()) return false;
  for (const auto& seg : split(s, '.'))
    if (!is_identifier(seg)) return false;
  return true;
}

TemplateDocument scan(std::string_view text, std::filesystem::path source) {
  TemplateDocument doc;
  doc.body = std::string(text);
  doc.source_path = std::move(source);
  PositionTracker track(text);
  const std::size_t n = text.size();

  for (std::size_t i = 0; i < n;) {
    const char c = text[i];
    if (c == '}') {
      if (i + 1 < n && text[i + 1] == '}') {
        doc.escapes.push_back(i);
        i += 2;
      } else {
        ++i;
      }
      continue;
    }
    if (c != '{') {
      ++i;
      continue;
    }
    if (i + 1 < n && text[i + 1] == '{') {
      doc.escapes.push_back(i);
      i += 2;
      continue;
    }
    const auto close = text.find_first_of("{}", i + 1);
    if (close == std::string_view::npos && text.find('\n', i) != std::string_view::npos) {
      doc.warnings.push_back({"unclosed '{' left verbatim", track.at(i)});
      ++i;
      continue;
    }
    if (close == std::string_view::npos) {
      const auto pos = track.at(i);
      throw ScanError(fmt::format("unbalanced '{{' at offset {} (line {}, column {})", i, pos.line, pos.column), pos);
    }
    if (text[close] == '{') {
      doc.warnings.push_back({"stray '{' left verbatim", track.at(i)});
      ++i;
      continue;
    }
    const auto inner = text.substr(i + 1, close - i - 1);
    if (is_dot_path(inner)) {
      doc.placeholders.push_back({std::string(inner), i, close + 1, track.at(i)});
    } else {
      doc.warnings.push_back({fmt::format("'{{{}}}' is not a placeholder, left verbatim", inner), track.at(i)});
    }
    i = close + 1;
  }
  return doc;
}

TemplateDocument scan_file(const std::filesystem::path& path) { return scan(read_file(path), path); }

RenderResult render(const TemplateDocument& tpl, const Resolver& resolve, RenderMode mode) {
  RenderResult out;
  out.warnings = tpl.warnings;
  out.text.reserve(tpl.body.size());

  std::size_t cursor = 0;
  auto ph = tpl.placeholders.begin();
  auto esc = tpl.escapes.begin();
  while (ph != tpl.placeholders.end() || esc != tpl.escapes.end()) {
    const bool take_escape = ph == tpl.placeholders.end() || (esc != tpl.escapes.end() && *esc < ph->begin);
    if (take_escape) {
      out.text.append(tpl.body, cursor, *esc - cursor);
      out.text += tpl.body[*esc];
      cursor = *esc + 2;
      ++esc;
      continue;
    }
    out.text.append(tpl.body, cursor, ph->begin - cursor);
    try {
      out.text += resolve(ph->path);
    } catch (const ValidationError& e) {
      if (mode == RenderMode::strict) {
        auto where = tpl.source_path.empty() ? std::string() : tpl.source_path.string() + ": ";
        throw RenderError(fmt::format("{}{} at line {}, column {}", where, e.what(), ph->pos.line, ph->pos.column),
                          ph->path, ph->pos);
      }
      out.text.append(tpl.body, ph->begin, ph->end - ph->begin);
      out.warnings.push_back({e.what(), ph->pos});
    }
    cursor = ph->end;
    ++ph;
  }
  out.text.append(tpl.body, cursor);
  return out;
}

RenderResult render(const TemplateDocument& tpl, const ExperimentPoint& point, const ExperimentSpec& spec,
                    const VarMap& env, const VarMap& db, RenderMode mode) {
  return render(
      tpl, [&](std::string_view path) { return resolve_variable(path, point, spec, env, db); }, mode);
}

std::string render_config(const ExperimentSpec& spec, const ExperimentPoint& point) {
  YAML::Node doc = YAML::Clone(spec.raw);
  if (!spec.experiment.empty()) {
    YAML::Node exp = doc["experiment"];
    for (const auto& [key, value] : point.assignments) {
      YAML::Node scalar(value);
      YAML::Emitter probe;
      probe << scalar;
      ValueSet reread = parse_value_set(YAML::Load(probe.c_str()));
      const bool unambiguous =
          reread.kind == ValueSet::Kind::single && reread.values.size() == 1 && reread.values.front() == value;
      if (unambiguous) {
        exp[key] = scalar;
      } else {
        // a one-element list re-parses as exactly this value
        YAML::Node list(YAML::NodeType::Sequence);
        list.push_back(value);
        list.SetStyle(YAML::EmitterStyle::Flow);
        exp[key] = list;
      }
    }
  }
  YAML::Emitter em;
  em << doc;
  std::string text = em.c_str();
  if (text.empty() || text.back() != '\n') text += '\n';
  return text;
}

}  // namespace bench
