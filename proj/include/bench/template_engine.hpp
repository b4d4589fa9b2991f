#pragma once

// `{dot.path}` placeholder templates for batch scripts, configs and labels.
// `{{` and `}}` render as literal braces.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "bench/error.hpp"
#include "bench/spec_model.hpp"

namespace bench {

struct TextPosition {
  std::size_t offset = 0;
  int line = 1;
  int column = 1;
};

struct Placeholder {
  std::string path;
  std::size_t begin = 0;  // offset of '{'
  std::size_t end = 0;    // one past '}'
  TextPosition pos;
};

struct TemplateWarning {
  std::string message;
  TextPosition pos;
};

struct TemplateDocument {
  std::string body;
  std::vector<Placeholder> placeholders;
  /// Offsets of `{{` / `}}` pairs.
  std::vector<std::size_t> escapes;
  std::vector<TemplateWarning> warnings;
  std::filesystem::path source_path;
};

struct ScanError : ValidationError {
  ScanError(const std::string& what, TextPosition p) : ValidationError(what), pos(p) {}
  TextPosition pos;
};

struct RenderError : ValidationError {
  RenderError(const std::string& what, std::string p, TextPosition where)
      : ValidationError(what), path(std::move(p)), pos(where) {}
  std::string path;
  TextPosition pos;
};

bool is_dot_path(std::string_view s);

TemplateDocument scan(std::string_view text, std::filesystem::path source = {});
TemplateDocument scan_file(const std::filesystem::path& path);

enum class RenderMode { strict, lenient };

struct RenderResult {
  std::string text;
  std::vector<TemplateWarning> warnings;
};

/// Maps a placeholder path to its value; throws UndefinedVariable/NotAScalar.
using Resolver = std::function<std::string(std::string_view path)>;

RenderResult render(const TemplateDocument& tpl, const Resolver& resolve, RenderMode mode);

RenderResult render(const TemplateDocument& tpl, const ExperimentPoint& point, const ExperimentSpec& spec,
                    const VarMap& env, const VarMap& db, RenderMode mode);

/// The spec document with each experiment entry pinned to the point's value,
/// canonically re-serialized.
std::string render_config(const ExperimentSpec& spec, const ExperimentPoint& point);

}  // namespace bench
