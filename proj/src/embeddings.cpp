#include "entailkg/embeddings.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "entailkg/binio.h"
#include "entailkg/errors.h"
#include "entailkg/rng.h"

namespace entailkg {

namespace {

constexpr std::string_view kEmbeddingMagic = "EKGE";
constexpr std::uint16_t kEmbeddingVersion = 1;

void check_finite(std::span<const float> data, std::size_t dim) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw InputError("embeddings: non-finite value at row " + std::to_string(i / dim) +
                             ", column " + std::to_string(i % dim));
        }
    }
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (dim_ == 0) throw std::invalid_argument("embeddings: dim must be positive");
    if (data_.size() != rows_ * dim_) {
        throw std::invalid_argument("embeddings: data size " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows_) + "x" +
                                    std::to_string(dim_));
    }
    check_finite(data_, dim_);
}

double l2_norm(std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sq);
}

EmbeddingMatrix normalize(const EmbeddingMatrix& m) {
    EmbeddingMatrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double norm = l2_norm(m.row(i));
        if (norm == 0.0) {
            throw InputError("embeddings: row " + std::to_string(i) + " is all zeros and cannot be normalized");
        }
        if (std::abs(norm - 1.0) <= 1e-6) continue;
        float* row = out.data_.data() + i * m.dim();
        for (std::size_t j = 0; j < m.dim(); ++j) {
            row[j] = static_cast<float>(static_cast<double>(row[j]) / norm);
        }
    }
    out.normalized_ = true;
    return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: undefined for a zero vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

EmbeddingMatrix random_init(std::size_t rows, std::size_t dim, std::uint64_t seed, float scale) {
    if (rows == 0 || dim == 0) throw std::invalid_argument("random_init: rows and dim must be positive");
    if (!(scale > 0.0f)) throw std::invalid_argument("random_init: scale must be positive");
    Rng rng(seed);
    std::vector<float> data(rows * dim);
    const double s = scale;
    for (auto& x : data) {
        // 2u - 1 lies in [-1, 1); the cast can round up to exactly scale.
        x = static_cast<float>(s * (2.0 * rng.uniform01() - 1.0));
    }
    return EmbeddingMatrix(rows, dim, std::move(data));
}

void save_embeddings(const EmbeddingMatrix& m, std::ostream& out) {
    binio::write_magic(out, kEmbeddingMagic);
    binio::write<std::uint16_t>(out, kEmbeddingVersion);
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
    binio::write_array(out, m.data());
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    save_embeddings(m, out);
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

EmbeddingMatrix load_embeddings(std::istream& in, std::optional<std::size_t> expected_rows) {
    binio::Reader r(in, "embeddings");
    r.expect_magic(kEmbeddingMagic);
    r.expect_version(kEmbeddingVersion);
    const std::size_t rows = r.read<std::uint32_t>();
    const std::size_t dim = r.read<std::uint32_t>();
    if (expected_rows && rows != *expected_rows) {
        throw InputError("embeddings: file declares " + std::to_string(rows) + " rows but " +
                         std::to_string(*expected_rows) + " were expected");
    }
    if (dim == 0) throw FormatError("embeddings: zero dimension");
    auto data = r.read_vector<float>(rows * dim);
    if (!r.at_end()) throw FormatError("embeddings: trailing bytes after matrix data");
    check_finite(data, dim);
    return EmbeddingMatrix(rows, dim, std::move(data));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, std::optional<std::size_t> expected_rows) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return load_embeddings(in, expected_rows);
}

}  // namespace entailkg
