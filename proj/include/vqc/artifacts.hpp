#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vqc/codebook.hpp"
#include "vqc/matrix.hpp"
#include "vqc/mlp.hpp"
#include "vqc/synthdata.hpp"
#include "vqc/vqvae.hpp"

// Binary layout shared by every artifact (all integers and floats little-endian):
//
//   "VQC1"  u32 version  u32 0x01020304 (endianness marker)  u32 kind
//   then sections until end of file:  char[4] tag  u64 payload_bytes  payload
//
// Matrices are u64 rows, u64 cols, rows*cols f64. Vectors are u64 length then
// elements. Unknown section tags are skipped on read.
namespace vqc::artifacts {

inline constexpr std::array<char, 4> kMagic = {'V', 'Q', 'C', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kEndianMarker = 0x01020304;

enum class ArtifactKind : std::uint32_t { kCheckpoint = 1, kDataset = 2, kDump = 3 };

/// Raw embeddings, tokens and assignments of one model over one dataset.
struct Dump {
  Matrix embeddings;       // N x latent_dim, encoder outputs on every sample
  Matrix tokens;           // S x token_dim
  std::vector<std::uint64_t> assignment;  // N * tokens_per_sample
  std::vector<std::uint64_t> labels;      // N
  Matrix reconstructions;  // N x dim, scaled coordinates
};

std::vector<std::uint8_t> encode_checkpoint(const VqVae& model);
VqVae decode_checkpoint(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_dataset(const GaussianMixtureDataset& ds);
GaussianMixtureDataset decode_dataset(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_dump(const Dump& dump);
Dump decode_dump(const std::vector<std::uint8_t>& bytes);

Dump make_dump(const VqVae& model, const GaussianMixtureDataset& ds);

/// Kind recorded in an artifact header; throws IoError on a bad header.
ArtifactKind peek_kind(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const VqVae& model);
VqVae load_checkpoint(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const GaussianMixtureDataset& ds);
GaussianMixtureDataset load_dataset(const std::filesystem::path& path);
void save_dump(const std::filesystem::path& path, const Dump& dump);
Dump load_dump(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames, so readers never see partial files.
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace vqc::artifacts
