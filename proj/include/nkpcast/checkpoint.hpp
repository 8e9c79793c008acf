#pragma once

// Versioned binary checkpoints with magic bytes, a shape header, and a
// trailing CRC-32. Save/load is a bit-exact round trip; mismatched
// versions, kinds, or checksums are hard errors.

#include <string>

#include "nkpcast/encoder.hpp"
#include "nkpcast/predictor.hpp"
#include "nkpcast/refdb.hpp"

namespace nkpcast::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

std::uint32_t crc32(const void* data, std::size_t size);

// Atomic write-then-rename.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

void save_encoder(const std::string& path, const nkp::EncoderParams& params);
nkp::EncoderParams load_encoder(const std::string& path);

void save_predictor(const std::string& path,
                    const motion::PredictorParams& params);
motion::PredictorParams load_predictor(const std::string& path);

void save_refdb(const std::string& path, const nkp::ReferenceDb& db);
nkp::ReferenceDb load_refdb(const std::string& path);

// NormalizationSpec travels as JSON beside the binary checkpoints.
void save_normalization(const std::string& path,
                        const pipeline::NormalizationSpec& spec);
pipeline::NormalizationSpec load_normalization(const std::string& path);

}  // namespace nkpcast::ckpt
