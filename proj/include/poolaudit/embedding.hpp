#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace poolaudit {

// Dense row-major float32 matrix with an optional key -> row map.
// Immutable once constructed; safe to share across threads.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    // Throws InvariantError if data.size() != rows * dims, a value is non-finite,
    // or an id_map row is out of range.
    EmbeddingMatrix(std::uint32_t rows, std::uint32_t dims, std::vector<float> data,
                    std::map<std::string, std::uint32_t> id_map = {});

    std::uint32_t rows() const noexcept { return rows_; }
    std::uint32_t dims() const noexcept { return dims_; }
    std::span<const float> row(std::uint32_t r) const;
    std::span<const float> data() const noexcept { return data_; }
    const std::map<std::string, std::uint32_t>& id_map() const noexcept { return id_map_; }
    std::optional<std::uint32_t> find(const std::string& key) const;

private:
    std::uint32_t rows_ = 0;
    std::uint32_t dims_ = 0;
    std::vector<float> data_;
    std::map<std::string, std::uint32_t> id_map_;
};

// Reads the `PAEM` binary layout. Throws IoError naming the byte offset on bad
// magic, truncation or a non-finite value.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

// Several files viewed as one row space: rows of the second file follow the rows
// of the first, and so on. All parts must share one dimensionality.
EmbeddingMatrix concatenate(std::span<const EmbeddingMatrix> parts);

} // namespace poolaudit
