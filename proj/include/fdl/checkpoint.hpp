#pragma once

#include <filesystem>

#include "fdl/toynet.hpp"

namespace fdl {

/// Checkpoint layout: one FDLT file per parameter, a plain-text manifest
/// (name, shape, role per line) and a key=value config file sufficient to
/// rebuild the network.
void save_checkpoint(const std::filesystem::path& dir, const ToyNet& net);

/// Rebuilds the network from config.txt and loads every parameter tensor;
/// throws FormatError on missing or shape-mismatched entries.
ToyNet load_checkpoint(const std::filesystem::path& dir);

}  // namespace fdl
