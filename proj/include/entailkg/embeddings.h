#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace entailkg {

// Dense row-major N x d float32 matrix of node embeddings. Entries are
// always finite; the normalized flag certifies unit-length rows.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data);

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }
    bool normalized() const { return normalized_; }

    std::span<const float> row(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<const float> data() const { return data_; }

    bool operator==(const EmbeddingMatrix&) const = default;

private:
    friend EmbeddingMatrix normalize(const EmbeddingMatrix& m);

    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
    bool normalized_ = false;
};

// Scales every row to unit L2 norm. Rows whose norm is already within 1e-6
// of 1 are kept bit-for-bit, which makes the operation idempotent.
// Throws InputError naming the first all-zero row.
EmbeddingMatrix normalize(const EmbeddingMatrix& m);

// a.b / (|a||b|) accumulated in double and clamped to [-1, 1].
// Throws std::invalid_argument on a dimension mismatch or a zero vector.
double cosine(std::span<const float> a, std::span<const float> b);

// L2 norm accumulated in double.
double l2_norm(std::span<const float> v);

// i.i.d. uniform entries in [-scale, scale] from Rng(seed).
EmbeddingMatrix random_init(std::size_t rows, std::size_t dim, std::uint64_t seed, float scale);

// Binary embedding file ("EKGE"): magic, u16 version, u32 N, u32 d, then
// N*d float32 little-endian row-major.
void save_embeddings(const EmbeddingMatrix& m, std::ostream& out);
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix load_embeddings(std::istream& in, std::optional<std::size_t> expected_rows = std::nullopt);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                std::optional<std::size_t> expected_rows = std::nullopt);

}  // namespace entailkg
