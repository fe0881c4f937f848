#include "entailkg/losses.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "entailkg/parallel.h"

namespace entailkg {

LabelIndex::LabelIndex(const Graph& g, std::span<const Split> splits) : node_count_(g.node_count()) {
    for (auto split : splits) {
        for (const auto& t : g.with_inverses(split)) tails_[key(t.head, t.relation)].push_back(t.tail);
    }
    queries_.reserve(tails_.size());
    for (auto& [k, tails] : tails_) {
        std::sort(tails.begin(), tails.end());
        tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
        queries_.push_back({static_cast<NodeId>(k >> 32), static_cast<RelationId>(k & 0xFFFFFFFFu)});
    }
    std::sort(queries_.begin(), queries_.end());
}

LabelIndex LabelIndex::train_only(const Graph& g) {
    const std::array splits{Split::train};
    return LabelIndex(g, splits);
}

LabelIndex LabelIndex::all_splits(const Graph& g) {
    const std::array splits{Split::train, Split::valid, Split::test};
    return LabelIndex(g, splits);
}

std::span<const NodeId> LabelIndex::tails(NodeId h, RelationId r) const {
    auto it = tails_.find(key(h, r));
    if (it == tails_.end()) return {};
    return it->second;
}

std::vector<double> make_labels(const LabelIndex& labels, NodeId h, RelationId r) {
    std::vector<double> out(labels.node_count(), 0.0);
    for (NodeId t : labels.tails(h, r)) out[t] = 1.0;
    return out;
}

std::vector<double> make_labels(const Graph& g, NodeId h, RelationId r) {
    std::vector<double> out(g.node_count(), 0.0);
    for (const auto& t : g.with_inverses(Split::train)) {
        if (t.head == h && t.relation == r) out[t.tail] = 1.0;
    }
    return out;
}

const char* to_string(Similarity s) {
    return s == Similarity::dot ? "dot" : "cosine";
}

Similarity parse_similarity(std::string_view name) {
    if (name == "cosine") return Similarity::cosine;
    if (name == "dot") return Similarity::dot;
    throw std::invalid_argument("unknown similarity '" + std::string(name) + "'");
}

BceResult kvsall_bce(std::span<const double> logits, std::span<const double> labels, double label_smoothing) {
    if (logits.size() != labels.size()) {
        throw std::invalid_argument("kvsall_bce: " + std::to_string(logits.size()) + " logits but " +
                                    std::to_string(labels.size()) + " labels");
    }
    if (logits.empty()) throw std::invalid_argument("kvsall_bce: empty score vector");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
        throw std::invalid_argument("kvsall_bce: label smoothing must lie in [0, 1)");
    }
    const double n = static_cast<double>(logits.size());
    BceResult out;
    out.grad.resize(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0) {
            throw std::invalid_argument("kvsall_bce: label " + std::to_string(i) + " is not binary");
        }
        const double t = (1.0 - label_smoothing) * labels[i] + label_smoothing / n;
        const double x = logits[i];
        total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
        out.grad[i] = (sigmoid(x) - t) / n;
    }
    out.loss = total / n;
    return out;
}

double kvsall_bce_from_scores(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw std::invalid_argument("kvsall_bce: scores and labels must be non-empty and equally long");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = scores[i];
        const double t = labels[i];
        if (t != 0.0 && t != 1.0) throw std::invalid_argument("kvsall_bce: label " + std::to_string(i) + " is not binary");
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("kvsall_bce: score outside (0, 1)");
        total += t * std::log(p) + (1.0 - t) * std::log1p(-p);
    }
    return -total / static_cast<double>(scores.size());
}

double triplet_loss(const DecoderParams& p, const LabelIndex& labels, std::span<const Query> batch,
                    std::span<const NodeId> scored_heads, double weight, Gradients* grads,
                    const StepOptions& options) {
    if (batch.size() != scored_heads.size()) {
        throw std::invalid_argument("triplet_loss: batch and scored heads differ in length");
    }
    if (batch.empty()) return 0.0;
    if (labels.node_count() != p.shape.entities) {
        throw std::invalid_argument("triplet_loss: label index and decoder disagree on entity count");
    }
    const double member_scale = weight / static_cast<double>(batch.size());
    std::vector<double> member_loss(batch.size());

    auto run = [&](std::size_t i, Gradients* g) {
        Rng dropout_rng(Rng::derive(options.dropout_seed, i));
        const ForwardOptions fo{options.dropout, &dropout_rng};
        Tape tape;
        const auto logits = score_logits(p, scored_heads[i], batch[i].relation, g ? &tape : nullptr, fo);
        const auto target = make_labels(labels, batch[i].head, batch[i].relation);
        auto bce = kvsall_bce(logits, target, options.label_smoothing);
        member_loss[i] = bce.loss;
        if (g) {
            for (auto& x : bce.grad) x *= member_scale;
            backward(p, tape, bce.grad, *g);
        }
    };

    const unsigned workers = std::min<unsigned>(resolve_threads(options.threads), static_cast<unsigned>(batch.size()));
    if (workers <= 1 || !grads) {
        for (std::size_t i = 0; i < batch.size(); ++i) run(i, grads);
    } else {
        std::vector<Gradients> partial(workers, Gradients(p.shape));
        parallel_chunks(batch.size(), workers, [&](std::size_t begin, std::size_t end, unsigned w) {
            for (std::size_t i = begin; i < end; ++i) run(i, &partial[w]);
        });
        for (const auto& g : partial) grads->add(g);
    }

    double total = 0.0;
    for (double l : member_loss) total += l;
    return total / static_cast<double>(batch.size());
}

std::vector<NodeId> sample_entailed(const EntailIndex& index, std::span<const NodeId> heads, std::size_t k, Rng& rng) {
    if (k == 0) throw std::invalid_argument("sample_entailed: k must be at least 1");
    if (k > index.k_max()) {
        throw std::invalid_argument("sample_entailed: k=" + std::to_string(k) + " exceeds index k_max=" +
                                    std::to_string(index.k_max()));
    }
    std::vector<NodeId> out;
    out.reserve(heads.size());
    for (NodeId h : heads) {
        if (h >= index.node_count()) throw std::out_of_range("sample_entailed: node id outside the index");
        const auto list = index.top(h, k);
        out.push_back(list[rng.below(k)].node);
    }
    return out;
}

SyntheticLoss synthetic_loss(const DecoderParams& p, const LabelIndex& labels, const EntailIndex& index,
                             std::span<const Query> batch, std::size_t k1, Rng& rng, double weight,
                             Gradients* grads, const StepOptions& options) {
    std::vector<NodeId> heads(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) heads[i] = batch[i].head;
    SyntheticLoss out;
    out.entailed_heads = sample_entailed(index, heads, k1, rng);
    out.loss = triplet_loss(p, labels, batch, out.entailed_heads, weight, grads, options);
    return out;
}

double contrast_loss(const DecoderParams& p, std::span<const NodeId> heads, std::span<const NodeId> positives,
                     double temperature, Similarity similarity, double weight, Gradients* grads) {
    const std::size_t batch = heads.size();
    if (batch < 2) throw std::invalid_argument("contrast_loss: needs at least 2 heads, got " + std::to_string(batch));
    if (positives.size() != batch) throw std::invalid_argument("contrast_loss: one positive per head required");
    if (!(temperature > 0.0)) throw std::invalid_argument("contrast_loss: temperature must be positive");
    const std::size_t d = p.shape.dim;
    for (std::size_t i = 0; i < batch; ++i) {
        if (heads[i] >= p.shape.entities || positives[i] >= p.shape.entities) {
            throw std::out_of_range("contrast_loss: node id out of range");
        }
    }

    auto row = [&](NodeId v) { return p.entity_row(v); };
    std::vector<double> head_norm(batch, 1.0), pos_norm(batch, 1.0);
    if (similarity == Similarity::cosine) {
        for (std::size_t i = 0; i < batch; ++i) {
            head_norm[i] = l2_norm(row(heads[i]));
            pos_norm[i] = l2_norm(row(positives[i]));
            if (head_norm[i] == 0.0 || pos_norm[i] == 0.0) {
                throw std::invalid_argument("contrast_loss: cosine similarity of an all-zero entity row");
            }
        }
    }

    // sim[i][j] between head i and positive j
    std::vector<double> sim(batch * batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const auto a = row(heads[i]);
        for (std::size_t j = 0; j < batch; ++j) {
            const auto b = row(positives[j]);
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(a[k]) * static_cast<double>(b[k]);
            sim[i * batch + j] = dot / (head_norm[i] * pos_norm[j]);
        }
    }

    double total = 0.0;
    std::vector<double> dsim(batch * batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* s = sim.data() + i * batch;
        double max_logit = s[0] / temperature;
        for (std::size_t j = 1; j < batch; ++j) max_logit = std::max(max_logit, s[j] / temperature);
        double denom = 0.0;
        for (std::size_t j = 0; j < batch; ++j) denom += std::exp(s[j] / temperature - max_logit);
        const double log_z = max_logit + std::log(denom);
        total += log_z - s[i] / temperature;
        for (std::size_t j = 0; j < batch; ++j) {
            const double softmax = std::exp(s[j] / temperature - log_z);
            dsim[i * batch + j] = (softmax - (i == j ? 1.0 : 0.0)) / temperature;
        }
    }
    const double loss = total / static_cast<double>(batch);

    if (grads) {
        const double scale = weight / static_cast<double>(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const auto a = row(heads[i]);
            double* ga = grads->entity.data() + static_cast<std::size_t>(heads[i]) * d;
            for (std::size_t j = 0; j < batch; ++j) {
                const double g = scale * dsim[i * batch + j];
                if (g == 0.0) continue;
                const auto b = row(positives[j]);
                double* gb = grads->entity.data() + static_cast<std::size_t>(positives[j]) * d;
                if (similarity == Similarity::cosine) {
                    const double s = sim[i * batch + j];
                    const double inv_ab = 1.0 / (head_norm[i] * pos_norm[j]);
                    const double inv_aa = 1.0 / (head_norm[i] * head_norm[i]);
                    const double inv_bb = 1.0 / (pos_norm[j] * pos_norm[j]);
                    for (std::size_t k = 0; k < d; ++k) {
                        const double ak = a[k];
                        const double bk = b[k];
                        ga[k] += g * (bk * inv_ab - s * ak * inv_aa);
                        gb[k] += g * (ak * inv_ab - s * bk * inv_bb);
                    }
                } else {
                    for (std::size_t k = 0; k < d; ++k) {
                        ga[k] += g * static_cast<double>(b[k]);
                        gb[k] += g * static_cast<double>(a[k]);
                    }
                }
                grads->entity_touched[positives[j]] = 1;
            }
            grads->entity_touched[heads[i]] = 1;
        }
    }
    return loss;
}

ContrastLoss entity_contrast(const DecoderParams& p, std::span<const NodeId> heads, const EntailIndex& index,
                             std::size_t k2, double temperature, Similarity similarity, Rng& rng, double weight,
                             Gradients* grads) {
    ContrastLoss out;
    out.positives = sample_entailed(index, heads, k2, rng);
    out.loss = contrast_loss(p, heads, out.positives, temperature, similarity, weight, grads);
    return out;
}

double combined_loss(double l1, double l2, double lc, const LossConfig& cfg) {
    const std::array<std::pair<const char*, double>, 3> parts{{{"l1", l1}, {"l2", l2}, {"lc", lc}}};
    for (const auto& [name, value] : parts) {
        if (!std::isfinite(value)) {
            throw std::invalid_argument(std::string("combined_loss: component ") + name + " is not finite");
        }
    }
    return l1 + cfg.gamma1 * l2 + cfg.gamma2 * lc;
}

}  // namespace entailkg
