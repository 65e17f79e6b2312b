#include "poolaudit/embedding.hpp"

#include "poolaudit/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace poolaudit {
namespace {

static_assert(std::endian::native == std::endian::little, "embedding IO assumes little-endian host");

constexpr std::array<char, 4> kMagic{'P', 'A', 'E', 'M'};

class ByteReader {
public:
    ByteReader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    std::size_t offset() const noexcept { return pos_; }

    void read(void* out, std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            fail("truncated " + std::string(what));
        }
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::uint32_t u32(const char* what) {
        std::uint32_t v = 0;
        read(&v, sizeof v, what);
        return v;
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw IoError("ingest", path_ + ": " + message + " at byte offset " + std::to_string(pos_));
    }

    bool at_end() const noexcept { return pos_ == bytes_.size(); }

private:
    std::vector<char> bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

} // namespace

EmbeddingMatrix::EmbeddingMatrix(std::uint32_t rows, std::uint32_t dims, std::vector<float> data,
                                 std::map<std::string, std::uint32_t> id_map)
    : rows_(rows), dims_(dims), data_(std::move(data)), id_map_(std::move(id_map)) {
    if (data_.size() != static_cast<std::size_t>(rows_) * dims_) {
        throw InvariantError("ingest", "embedding data length does not equal rows x dims");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw InvariantError("ingest", "non-finite at row " + std::to_string(i / dims_) + ", col " +
                                               std::to_string(i % dims_));
        }
    }
    for (const auto& [key, r] : id_map_) {
        if (r >= rows_) {
            throw InvariantError("ingest", "id map entry '" + key + "' points past the last row");
        }
    }
}

std::span<const float> EmbeddingMatrix::row(std::uint32_t r) const {
    if (r >= rows_) {
        throw InvariantError("ingest", "embedding row " + std::to_string(r) + " out of range (rows=" +
                                           std::to_string(rows_) + ")");
    }
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(r) * dims_, dims_);
}

std::optional<std::uint32_t> EmbeddingMatrix::find(const std::string& key) const {
    const auto it = id_map_.find(key);
    if (it == id_map_.end()) {
        return std::nullopt;
    }
    return it->second;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("ingest", "cannot open embedding file " + path.string());
    }
    ByteReader reader(std::vector<char>(std::istreambuf_iterator<char>(in), {}), path.string());

    std::array<char, 4> magic{};
    reader.read(magic.data(), magic.size(), "magic");
    if (magic != kMagic) {
        throw IoError("ingest", path.string() + ": bad magic at byte offset 0");
    }
    const std::uint32_t rows = reader.u32("header");
    const std::uint32_t dims = reader.u32("header");
    const std::size_t count = static_cast<std::size_t>(rows) * dims;

    std::vector<float> data(count);
    const std::size_t data_offset = reader.offset();
    reader.read(data.data(), count * sizeof(float), "data");
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(data[i])) {
            throw IoError("ingest", path.string() + ": non-finite at row " + std::to_string(i / dims) + ", col " +
                                        std::to_string(i % dims) + " (byte offset " +
                                        std::to_string(data_offset + i * sizeof(float)) + ")");
        }
    }

    std::map<std::string, std::uint32_t> id_map;
    if (!reader.at_end()) {
        const std::uint32_t entries = reader.u32("id map count");
        for (std::uint32_t i = 0; i < entries; ++i) {
            const std::uint32_t len = reader.u32("id map key length");
            std::string key(len, '\0');
            reader.read(key.data(), len, "id map key");
            const std::uint32_t r = reader.u32("id map row");
            if (r >= rows) {
                reader.fail("id map row " + std::to_string(r) + " out of range");
            }
            id_map.emplace(std::move(key), r);
        }
        if (!reader.at_end()) {
            reader.fail("trailing bytes");
        }
    }
    return EmbeddingMatrix(rows, dims, std::move(data), std::move(id_map));
}

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("ingest", "cannot write embedding file " + path.string());
    }
    out.write(kMagic.data(), kMagic.size());
    write_u32(out, matrix.rows());
    write_u32(out, matrix.dims());
    out.write(reinterpret_cast<const char*>(matrix.data().data()),
              static_cast<std::streamsize>(matrix.data().size() * sizeof(float)));
    write_u32(out, static_cast<std::uint32_t>(matrix.id_map().size()));
    for (const auto& [key, r] : matrix.id_map()) {
        write_u32(out, static_cast<std::uint32_t>(key.size()));
        out.write(key.data(), static_cast<std::streamsize>(key.size()));
        write_u32(out, r);
    }
    if (!out) {
        throw IoError("ingest", "short write to " + path.string());
    }
}

EmbeddingMatrix concatenate(std::span<const EmbeddingMatrix> parts) {
    if (parts.empty()) {
        return {};
    }
    if (parts.size() == 1) {
        return parts.front();
    }
    const std::uint32_t dims = parts.front().dims();
    std::vector<float> data;
    std::map<std::string, std::uint32_t> id_map;
    std::uint32_t offset = 0;
    for (const auto& part : parts) {
        if (part.dims() != dims) {
            throw InvariantError("ingest", "embedding files disagree on dimensionality");
        }
        data.insert(data.end(), part.data().begin(), part.data().end());
        for (const auto& [key, r] : part.id_map()) {
            id_map.emplace(key, r + offset);
        }
        offset += part.rows();
    }
    return EmbeddingMatrix(offset, dims, std::move(data), std::move(id_map));
}

} // namespace poolaudit
