#include "sidforge/embeddings.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "sidforge/checksum.hpp"
#include "sidforge/error.hpp"

namespace sidforge {

EmbeddingSet::EmbeddingSet(std::vector<std::string> item_ids, std::size_t dim,
                           std::vector<float> values)
    : item_ids_(std::move(item_ids)), dim_(dim), values_(std::move(values)) {
  if (dim_ == 0) throw Error("embedding dim must be at least 1");
  if (values_.size() != item_ids_.size() * dim_) {
    throw Error("embedding payload has " + std::to_string(values_.size()) +
                " values, expected " + std::to_string(item_ids_.size() * dim_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error("non-finite embedding value at row " + std::to_string(i / dim_) +
                  ", column " + std::to_string(i % dim_));
    }
  }
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

void append_matrix_block(std::string& out, std::uint32_t count, std::uint32_t dim,
                         std::span<const float> values) {
  if (values.size() != static_cast<std::size_t>(count) * dim) {
    throw Error("matrix block value count does not match count x dim");
  }
  out.append(kMatrixMagic);
  put_u32(out, count);
  put_u32(out, dim);
  const std::size_t payload_at = out.size();
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  const std::string_view payload(out.data() + payload_at, out.size() - payload_at);
  put_u32(out, crc32(std::as_bytes(std::span(payload.data(), payload.size()))));
}

MatrixBlock read_matrix_block(std::string_view bytes, std::size_t& offset) {
  constexpr std::size_t kHeader = 16;
  if (bytes.size() - offset < kHeader) throw FormatError(offset, "truncated header");
  if (bytes.substr(offset, kMatrixMagic.size()) != kMatrixMagic) {
    throw FormatError(offset, "bad magic, expected SIDEMB01");
  }
  MatrixBlock block;
  block.count = get_u32(bytes, offset + 8);
  block.dim = get_u32(bytes, offset + 12);
  const std::size_t payload_at = offset + kHeader;
  const std::uint64_t payload_bytes = std::uint64_t{block.count} * block.dim * 4;
  if (bytes.size() - payload_at < payload_bytes) {
    throw FormatError(bytes.size(), "truncated payload: expected " +
                                        std::to_string(payload_bytes) + " bytes after offset " +
                                        std::to_string(payload_at));
  }
  const std::size_t footer_at = payload_at + payload_bytes;
  if (bytes.size() - footer_at < 4) throw FormatError(bytes.size(), "truncated CRC footer");
  const std::string_view payload = bytes.substr(payload_at, payload_bytes);
  if (crc32(std::as_bytes(std::span(payload.data(), payload.size()))) !=
      get_u32(bytes, footer_at)) {
    throw FormatError(footer_at, "payload CRC mismatch");
  }
  block.values.resize(static_cast<std::size_t>(block.count) * block.dim);
  for (std::size_t i = 0; i < block.values.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, payload_at + 4 * i));
    if (!std::isfinite(f)) throw FormatError(payload_at + 4 * i, "non-finite value");
    block.values[i] = f;
  }
  offset = footer_at + 4;
  return block;
}

std::filesystem::path ids_path_for(const std::filesystem::path& embeddings_path) {
  auto p = embeddings_path;
  p.replace_extension(".ids");
  return p;
}

EmbeddingSet decode_embeddings(std::string_view bytes, std::vector<std::string> item_ids) {
  std::size_t offset = 0;
  MatrixBlock block = read_matrix_block(bytes, offset);
  if (offset != bytes.size()) throw FormatError(offset, "trailing bytes after footer");
  if (block.dim == 0) throw FormatError(12, "dim must be at least 1");
  if (item_ids.empty()) {
    for (std::uint32_t i = 0; i < block.count; ++i) item_ids.push_back(std::to_string(i));
  } else if (item_ids.size() != block.count) {
    throw Error("id file lists " + std::to_string(item_ids.size()) + " ids for " +
                std::to_string(block.count) + " rows");
  }
  return EmbeddingSet(std::move(item_ids), block.dim, std::move(block.values));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  const auto ids_path = ids_path_for(path);
  if (std::filesystem::exists(ids_path)) {
    const std::string text = read_file(ids_path);
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string id = text.substr(pos, end - pos);
      if (!id.empty() && id.back() == '\r') id.pop_back();
      ids.push_back(std::move(id));
      pos = end + 1;
    }
  }
  return decode_embeddings(read_file(path), std::move(ids));
}

std::string encode_embeddings(const EmbeddingSet& embeddings) {
  std::string out;
  out.reserve(20 + embeddings.values().size() * 4);
  append_matrix_block(out, static_cast<std::uint32_t>(embeddings.count()),
                      static_cast<std::uint32_t>(embeddings.dim()), embeddings.values());
  return out;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& embeddings) {
  std::string ids;
  for (const auto& id : embeddings.item_ids()) {
    if (id.find('\n') != std::string::npos) throw Error("item id contains a newline");
    ids += id;
    ids += '\n';
  }
  write_file_atomic(path, encode_embeddings(embeddings));
  write_file_atomic(ids_path_for(path), ids);
}

}  // namespace sidforge
