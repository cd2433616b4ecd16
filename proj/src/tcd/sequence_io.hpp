// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "tcd/sequence.hpp"

namespace tcd {

// One sequence on disk: coordinates, the skeleton they live on, how many
// leading frames are observation, and optionally an availability mask.
struct SequenceRecord {
  PoseSequence sequence;
  SkeletonSpec skeleton;
  int observation_len = 0;
  std::optional<AvailabilityMask> mask;
};

// Binary container (magic "PSEQ1\n", JSON header, float32 payload, optional
// mask bytes). Round-trips bit-exactly.
void write_sequence(const SequenceRecord& record, const std::string& path);
SequenceRecord read_sequence(const std::string& path);

// Plain-text variant for eyeballing and spreadsheets. Metadata rides in
// '#'-prefixed lines; coordinates keep enough digits to round-trip float32.
void write_sequence_csv(const SequenceRecord& record, const std::string& path);
SequenceRecord read_sequence_csv(const std::string& path);

// Dispatch on extension: ".csv" uses the text form, everything else PSEQ1.
void write_sequence_auto(const SequenceRecord& record, const std::string& path);
SequenceRecord read_sequence_auto(const std::string& path);

}  // namespace tcd
