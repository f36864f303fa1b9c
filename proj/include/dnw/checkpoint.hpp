#pragma once

#include "dnw/engine.hpp"

#include <string>

namespace dnw {

/// JSON document with the graph spec, every candidate weight and velocity,
/// node parameters and running statistics, the io maps and the iteration
/// counter. Doubles are written with round-trip precision.
std::string checkpoint_to_json(const Model& model);
Model checkpoint_from_json(const std::string& text);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

/// Writes to `path.tmp` and renames over `path`.
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace dnw
