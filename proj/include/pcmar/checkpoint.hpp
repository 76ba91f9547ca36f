#pragma once

#include <filesystem>
#include <vector>

#include "pcmar/autograd.hpp"

namespace pcmar {

/// Writes one TNSR file per parameter plus `manifest.txt` with lines
/// `name filename dims` (dims joined by 'x').
void save_checkpoint(const std::vector<ag::Parameter<float>*>& params, const std::filesystem::path& dir);

/// Loads values into existing parameters. Names and shapes must match the
/// manifest exactly; any mismatch is an error.
void load_checkpoint(const std::vector<ag::Parameter<float>*>& params, const std::filesystem::path& dir);

}  // namespace pcmar
