#pragma once

#include <string>

#include "lesa/model.hpp"

namespace lesa {

// "LESA1" checkpoint: 5 magic bytes, a little-endian u64 header length, a
// UTF-8 JSON header (config, labels, vocab, parameter manifest with byte
// offsets into the payload), then all parameters as little-endian f32.
void save_checkpoint(const TriageModel& model, const std::string& path);

TriageModel load_checkpoint(const std::string& path);

}  // namespace lesa
