#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "sumflow/overparam.hpp"
#include "sumflow/spn.hpp"

namespace sumflow {

struct ParsedModel {
  Spn spn;
  std::optional<LayerIndexMap> layer_map;
};

/// JSON text for a network, optionally with its component chain map.
/// Weights and leaf parameters are printed with 17 significant digits so
/// parsing the output reproduces every double bit for bit.
std::string serialize(const Spn& spn, const LayerIndexMap* map = nullptr);

/// Structural parse only: malformed JSON, missing fields, duplicate or
/// dangling ids raise ParseError/Error, but semantic invariants (cycles,
/// scope rules, negative weights) are NOT checked, so invalid networks can
/// be loaded and inspected (see Spn::validate).
ParsedModel parse_model(std::string_view text);

/// parse_model plus invariant validation; throws Error naming the first
/// violations if the network is not a valid SPN.
ParsedModel deserialize(std::string_view text);

ParsedModel load_model(const std::filesystem::path& path,
                       bool validate = true);
void save_model(const std::filesystem::path& path, const Spn& spn,
                const LayerIndexMap* map = nullptr);

/// Shortest text that parses back to exactly `value` (17 significant
/// digits); shared by every writer that must round-trip doubles.
std::string format_double(double value);

}  // namespace sumflow
