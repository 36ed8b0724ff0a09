#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sidforge {

/// Dense row-major item embedding matrix with aligned item ids.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  /// Throws Error unless values.size() == ids.size() * dim, dim >= 1 and
  /// every value is finite.
  EmbeddingSet(std::vector<std::string> item_ids, std::size_t dim, std::vector<float> values);

  std::size_t count() const noexcept { return item_ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return item_ids_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  const std::vector<float>& values() const noexcept { return values_; }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }

  bool operator==(const EmbeddingSet&) const = default;

 private:
  std::vector<std::string> item_ids_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

/// Magic prefix of the binary matrix block.
inline constexpr std::string_view kMatrixMagic = "SIDEMB01";

/// A decoded matrix block: count x dim float32, row-major.
struct MatrixBlock {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;
};

/// Appends one block: magic, u32 count, u32 dim, payload, u32 CRC-32 of the
/// payload. All integers and floats little-endian.
void append_matrix_block(std::string& out, std::uint32_t count, std::uint32_t dim,
                         std::span<const float> values);

/// Reads the block starting at `offset` and advances it past the footer.
/// Errors carry the absolute byte offset of the defect.
MatrixBlock read_matrix_block(std::string_view bytes, std::size_t& offset);

/// Sibling id file used next to an embedding file: `x.bin` -> `x.ids`.
std::filesystem::path ids_path_for(const std::filesystem::path& embeddings_path);

/// Loads the binary matrix plus its sibling id file. When the id file is
/// missing, rows are named by their decimal index.
EmbeddingSet load_embeddings(const std::filesystem::path& path);
EmbeddingSet decode_embeddings(std::string_view bytes, std::vector<std::string> item_ids);

std::string encode_embeddings(const EmbeddingSet& embeddings);
void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& embeddings);

}  // namespace sidforge
