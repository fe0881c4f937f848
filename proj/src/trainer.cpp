#include "entailkg/trainer.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "entailkg/binio.h"
#include "entailkg/errors.h"

namespace entailkg {

namespace {

constexpr std::string_view kCheckpointMagic = "EKGC-CKPT";
constexpr std::uint16_t kCheckpointVersion = 1;

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("train config: " + what);
}

}  // namespace

void TrainConfig::validate() const {
    require(lr > 0.0, "lr must be positive");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(beta1 > 0.0 && beta1 < 1.0, "beta1 must lie in (0, 1)");
    require(beta2 > 0.0 && beta2 < 1.0, "beta2 must lie in (0, 1)");
    require(eps > 0.0, "eps must be positive");
    require(loss.gamma1 >= 0.0 && loss.gamma2 >= 0.0, "gamma1 and gamma2 must be non-negative");
    require(loss.temperature > 0.0, "temperature must be positive");
    require(loss.gamma1 == 0.0 || loss.k1 >= 1, "k1 must be at least 1 when gamma1 > 0");
    require(loss.gamma2 == 0.0 || loss.k2 >= 1, "k2 must be at least 1 when gamma2 > 0");
    require(loss.label_smoothing >= 0.0 && loss.label_smoothing < 1.0, "label_smoothing must lie in [0, 1)");
    require(dim >= 1 && kernels >= 1 && kernel_width >= 1, "dim, kernels and kernel_width must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    require(grad_clip >= 0.0, "grad_clip must be non-negative");
    require(entity_init_scale > 0.0f && relation_init_scale > 0.0f, "init scales must be positive");
}

bool apply_train_option(TrainConfig& cfg, const ConfigEntry& e, const std::string& file) {
    const auto& k = e.key;
    auto bad = [&](const std::string& why) { return ParseError(file, e.line, "'" + k + "': " + why); };
    try {
        if (k == "lr") cfg.lr = parse_double(e, file);
        else if (k == "batch_size") cfg.batch_size = parse_uint(e, file);
        else if (k == "epochs") cfg.epochs = parse_uint(e, file);
        else if (k == "seed") cfg.seed = parse_uint(e, file);
        else if (k == "gamma1") cfg.loss.gamma1 = parse_double(e, file);
        else if (k == "gamma2") cfg.loss.gamma2 = parse_double(e, file);
        else if (k == "temperature") cfg.loss.temperature = parse_double(e, file);
        else if (k == "k1") cfg.loss.k1 = parse_uint(e, file);
        else if (k == "k2") cfg.loss.k2 = parse_uint(e, file);
        else if (k == "similarity") cfg.loss.similarity = parse_similarity(e.value);
        else if (k == "label_smoothing") cfg.loss.label_smoothing = parse_double(e, file);
        else if (k == "beta1") cfg.beta1 = parse_double(e, file);
        else if (k == "beta2") cfg.beta2 = parse_double(e, file);
        else if (k == "eps") cfg.eps = parse_double(e, file);
        else if (k == "eval_every") cfg.eval_every = parse_uint(e, file);
        else if (k == "patience") cfg.patience = parse_uint(e, file);
        else if (k == "schedule") {
            if (e.value == "alternating") cfg.schedule = Schedule::alternating;
            else if (e.value == "joint") cfg.schedule = Schedule::joint;
            else throw bad("expected alternating or joint");
        } else if (k == "alternation") {
            if (e.value == "step") cfg.alternation = Alternation::step;
            else if (e.value == "epoch") cfg.alternation = Alternation::epoch;
            else throw bad("expected step or epoch");
        } else if (k == "grad_clip") cfg.grad_clip = parse_double(e, file);
        else if (k == "dim") cfg.dim = parse_uint(e, file);
        else if (k == "kernels") cfg.kernels = parse_uint(e, file);
        else if (k == "kernel_width") cfg.kernel_width = parse_uint(e, file);
        else if (k == "padding") cfg.padding = parse_padding(e.value);
        else if (k == "dropout") cfg.dropout = parse_double(e, file);
        else if (k == "entity_init_scale") cfg.entity_init_scale = static_cast<float>(parse_double(e, file));
        else if (k == "relation_init_scale") cfg.relation_init_scale = static_cast<float>(parse_double(e, file));
        else if (k == "entity_init") cfg.entity_init = e.value;
        else if (k == "threads") cfg.threads = static_cast<unsigned>(parse_uint(e, file));
        else if (k == "bitwise_repro") cfg.bitwise_repro = parse_bool(e, file);
        else return false;
    } catch (const std::invalid_argument& ex) {
        throw bad(ex.what());
    }
    return true;
}

TrainConfig parse_train_config(const KeyValueConfig& kv) {
    TrainConfig cfg;
    for (const auto& e : kv.entries()) {
        if (!apply_train_option(cfg, e, kv.name())) {
            throw ParseError(kv.name(), e.line, "unknown key '" + e.key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    return parse_train_config(KeyValueConfig::load(path));
}

std::string format_train_config(const TrainConfig& c) {
    std::string out;
    auto line = [&](std::string_view key, const auto& value) { out += fmt::format("{} = {}\n", key, value); };
    line("lr", c.lr);
    line("batch_size", c.batch_size);
    line("epochs", c.epochs);
    line("seed", c.seed);
    line("gamma1", c.loss.gamma1);
    line("gamma2", c.loss.gamma2);
    line("temperature", c.loss.temperature);
    line("k1", c.loss.k1);
    line("k2", c.loss.k2);
    line("similarity", to_string(c.loss.similarity));
    line("label_smoothing", c.loss.label_smoothing);
    line("beta1", c.beta1);
    line("beta2", c.beta2);
    line("eps", c.eps);
    line("eval_every", c.eval_every);
    line("patience", c.patience);
    line("schedule", c.schedule == Schedule::joint ? "joint" : "alternating");
    line("alternation", c.alternation == Alternation::epoch ? "epoch" : "step");
    line("grad_clip", c.grad_clip);
    line("dim", c.dim);
    line("kernels", c.kernels);
    line("kernel_width", c.kernel_width);
    line("padding", to_string(c.padding));
    line("dropout", c.dropout);
    line("entity_init_scale", c.entity_init_scale);
    line("relation_init_scale", c.relation_init_scale);
    if (!c.entity_init.empty()) line("entity_init", c.entity_init);
    line("threads", c.threads);
    line("bitwise_repro", c.bitwise_repro ? "true" : "false");
    return out;
}

DecoderShape decoder_shape(const TrainConfig& cfg, const Graph& g) {
    return {g.node_count(), g.relation_count_with_inverses(), cfg.dim, cfg.kernels, cfg.kernel_width, cfg.padding};
}

std::string to_json_line(const EpochMetrics& m) {
    nlohmann::ordered_json j;
    j["epoch"] = m.epoch;
    j["l1"] = m.l1;
    j["l2"] = m.l2;
    j["lc"] = m.lc;
    j["loss"] = m.loss;
    j["triplet_steps"] = m.triplet_steps;
    j["contrast_steps"] = m.contrast_steps;
    if (m.valid_mrr) j["valid_mrr"] = *m.valid_mrr;
    return j.dump();
}

TrainingState init_training(const Graph& g, const TrainConfig& cfg, const EmbeddingMatrix* entity_init) {
    cfg.validate();
    const auto shape = decoder_shape(cfg, g);
    std::optional<EmbeddingMatrix> loaded;
    if (entity_init == nullptr && !cfg.entity_init.empty()) {
        loaded = load_embeddings(cfg.entity_init, g.node_count());
        entity_init = &*loaded;
    }
    TrainingState state;
    state.params = init_decoder(shape, {cfg.seed, cfg.entity_init_scale, cfg.relation_init_scale}, entity_init);
    state.adam = AdamState(shape);
    state.seed = cfg.seed;
    return state;
}

std::vector<Query> epoch_order(const LabelIndex& labels, std::uint64_t seed, std::size_t epoch) {
    std::vector<Query> order = labels.queries();
    Rng rng(Rng::derive(seed, 2 * static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<Query>(order));
    return order;
}

EpochMetrics train_epoch(const LabelIndex& labels, const EntailIndex* index, const TrainConfig& cfg,
                         TrainingState& state) {
    cfg.validate();
    auto& params = state.params;
    const auto& loss_cfg = cfg.loss;
    const bool synthetic = loss_cfg.gamma1 > 0.0;
    const bool contrast = loss_cfg.gamma2 > 0.0;
    if ((synthetic || contrast) && index == nullptr) {
        throw std::invalid_argument("train_epoch: gamma1 > 0 or gamma2 > 0 requires an entailment index");
    }
    if (index && index->node_count() != params.shape.entities) {
        throw std::invalid_argument("train_epoch: entailment index covers " + std::to_string(index->node_count()) +
                                    " nodes, decoder has " + std::to_string(params.shape.entities));
    }

    const auto order = epoch_order(labels, state.seed, state.epoch);
    Rng rng(Rng::derive(state.seed, 2 * static_cast<std::uint64_t>(state.epoch) + 1));
    StepOptions options;
    options.label_smoothing = loss_cfg.label_smoothing;
    options.dropout = cfg.dropout;
    options.threads = cfg.bitwise_repro ? 1u : cfg.threads;
    const AdamConfig adam = cfg.adam();

    const bool contrast_epoch = cfg.schedule == Schedule::alternating && cfg.alternation == Alternation::epoch &&
                                contrast && state.epoch % 2 == 1;

    Gradients grads(params.shape);
    EpochMetrics m;
    double l1_sum = 0.0, l2_sum = 0.0, lc_sum = 0.0;
    std::size_t triplet_members = 0, contrast_members = 0;

    auto apply = [&] {
        if (cfg.grad_clip > 0.0) clip_global_norm(grads, cfg.grad_clip);
        adam_step(params, grads, state.adam, adam);
        ++state.optimizer_steps;
    };

    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
        const std::span<const Query> batch(order.data() + begin, end - begin);
        std::vector<NodeId> heads(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) heads[i] = batch[i].head;
        options.dropout_seed = rng.next();
        const bool can_contrast = contrast && batch.size() >= 2;

        auto triplet_terms = [&] {
            const double l1 = triplet_loss(params, labels, batch, heads, 1.0, &grads, options);
            l1_sum += l1 * static_cast<double>(batch.size());
            if (synthetic) {
                const auto l2 = synthetic_loss(params, labels, *index, batch, loss_cfg.k1, rng, loss_cfg.gamma1,
                                               &grads, options);
                l2_sum += l2.loss * static_cast<double>(batch.size());
            }
            triplet_members += batch.size();
        };
        auto contrast_terms = [&] {
            const auto lc = entity_contrast(params, heads, *index, loss_cfg.k2, loss_cfg.temperature,
                                            loss_cfg.similarity, rng, loss_cfg.gamma2, &grads);
            lc_sum += lc.loss * static_cast<double>(batch.size());
            contrast_members += batch.size();
        };

        if (cfg.schedule == Schedule::joint) {
            grads.clear();
            triplet_terms();
            if (can_contrast) contrast_terms();
            apply();
            ++m.triplet_steps;
            continue;
        }
        if (!contrast_epoch) {
            grads.clear();
            triplet_terms();
            apply();
            ++m.triplet_steps;
        }
        if (can_contrast && (cfg.alternation == Alternation::step || contrast_epoch)) {
            grads.clear();
            contrast_terms();
            apply();
            ++m.contrast_steps;
        }
    }

    ++state.epoch;
    m.epoch = state.epoch;
    m.l1 = triplet_members ? l1_sum / static_cast<double>(triplet_members) : 0.0;
    m.l2 = triplet_members ? l2_sum / static_cast<double>(triplet_members) : 0.0;
    m.lc = contrast_members ? lc_sum / static_cast<double>(contrast_members) : 0.0;
    m.loss = combined_loss(m.l1, m.l2, m.lc, loss_cfg);
    return m;
}

EpochMetrics train_epoch(const Graph& g, const EntailIndex* index, const TrainConfig& cfg, TrainingState& state) {
    return train_epoch(LabelIndex::train_only(g), index, cfg, state);
}

FitResult fit(const Graph& g, const EntailIndex* index, const TrainConfig& cfg, TrainingState& state,
              const FitHooks& hooks, std::optional<std::size_t> max_new_epochs) {
    const auto labels = LabelIndex::train_only(g);
    const bool validating = hooks.validate && cfg.eval_every > 0;
    FitResult result;
    while (state.epoch < cfg.epochs && (!max_new_epochs || result.epochs_run < *max_new_epochs)) {
        if (validating && state.evals_since_best >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
        auto m = train_epoch(labels, index, cfg, state);
        ++result.epochs_run;
        if (validating && state.epoch % cfg.eval_every == 0) {
            const double mrr = hooks.validate(state.params);
            m.valid_mrr = mrr;
            if (mrr > state.best_mrr) {
                state.best_mrr = mrr;
                state.best_epoch = state.epoch;
                state.evals_since_best = 0;
                if (hooks.on_best) hooks.on_best(state);
            } else {
                ++state.evals_since_best;
            }
        }
        if (hooks.on_epoch) hooks.on_epoch(m);
        if (hooks.on_checkpoint) hooks.on_checkpoint(state);
        result.history.push_back(m);
        if (validating && state.evals_since_best >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const TrainingState& s, std::ostream& out, bool include_optimizer) {
    const auto& shape = s.params.shape;
    binio::write_magic(out, kCheckpointMagic);
    binio::write<std::uint16_t>(out, kCheckpointVersion);
    for (std::size_t v : {shape.entities, shape.relations, shape.dim, shape.kernels, shape.kernel_width}) {
        binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    }
    binio::write<std::uint8_t>(out, static_cast<std::uint8_t>(shape.padding));
    binio::write_array<float>(out, s.params.entity);
    binio::write_array<float>(out, s.params.relation);
    binio::write_array<float>(out, s.params.kernel);
    binio::write_array<float>(out, s.params.projection);
    binio::write<std::uint64_t>(out, s.seed);
    binio::write<std::uint64_t>(out, s.epoch);
    binio::write<std::uint64_t>(out, s.optimizer_steps);
    binio::write<double>(out, s.best_mrr);
    binio::write<std::uint64_t>(out, s.best_epoch);
    binio::write<std::uint64_t>(out, s.evals_since_best);
    binio::write<std::uint8_t>(out, include_optimizer ? 1 : 0);
    if (include_optimizer) {
        binio::write<std::uint64_t>(out, s.adam.step);
        for (const auto* v : {&s.adam.m_entity, &s.adam.v_entity, &s.adam.m_relation, &s.adam.v_relation,
                              &s.adam.m_kernel, &s.adam.v_kernel, &s.adam.m_projection, &s.adam.v_projection}) {
            binio::write_array<float>(out, *v);
        }
    }
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path, bool include_optimizer) {
    // Write-then-rename so an interrupted save never clobbers the previous checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InputError("cannot write '" + tmp.string() + "'");
        save_checkpoint(state, out, include_optimizer);
        if (!out) throw InputError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(std::istream& in, const std::optional<DecoderShape>& expected) {
    binio::Reader r(in, "checkpoint");
    r.expect_magic(kCheckpointMagic);
    r.expect_version(kCheckpointVersion);
    DecoderShape shape;
    shape.entities = r.read<std::uint32_t>();
    shape.relations = r.read<std::uint32_t>();
    shape.dim = r.read<std::uint32_t>();
    shape.kernels = r.read<std::uint32_t>();
    shape.kernel_width = r.read<std::uint32_t>();
    const auto padding = r.read<std::uint8_t>();
    if (padding > 1) throw FormatError("checkpoint: unknown padding code");
    shape.padding = static_cast<Padding>(padding);
    if (expected && !(*expected == shape)) {
        throw InputError(fmt::format(
            "checkpoint: stored shape (N={}, relations={}, d={}, K={}, W={}) does not match expected "
            "(N={}, relations={}, d={}, K={}, W={})",
            shape.entities, shape.relations, shape.dim, shape.kernels, shape.kernel_width, expected->entities,
            expected->relations, expected->dim, expected->kernels, expected->kernel_width));
    }
    // Reject absurd headers before allocating.
    if (shape.dim == 0 || shape.kernels == 0 || shape.kernel_width == 0 ||
        shape.kernels * shape.dim * shape.dim > (std::size_t{1} << 34)) {
        throw FormatError("checkpoint: implausible decoder shape");
    }
    TrainingState s;
    s.params = DecoderParams(shape);
    r.read_array(std::span<float>(s.params.entity));
    r.read_array(std::span<float>(s.params.relation));
    r.read_array(std::span<float>(s.params.kernel));
    r.read_array(std::span<float>(s.params.projection));
    s.seed = r.read<std::uint64_t>();
    s.epoch = r.read<std::uint64_t>();
    s.optimizer_steps = r.read<std::uint64_t>();
    s.best_mrr = r.read<double>();
    s.best_epoch = r.read<std::uint64_t>();
    s.evals_since_best = r.read<std::uint64_t>();
    s.adam = AdamState(shape);
    const auto has_optimizer = r.read<std::uint8_t>();
    if (has_optimizer > 1) throw FormatError("checkpoint: corrupt optimizer flag");
    if (has_optimizer) {
        s.adam.step = r.read<std::uint64_t>();
        for (auto* v : {&s.adam.m_entity, &s.adam.v_entity, &s.adam.m_relation, &s.adam.v_relation,
                        &s.adam.m_kernel, &s.adam.v_kernel, &s.adam.m_projection, &s.adam.v_projection}) {
            r.read_array(std::span<float>(*v));
        }
    }
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");
    for (const auto* v : {&s.params.entity, &s.params.relation, &s.params.kernel, &s.params.projection}) {
        for (float x : *v)
            if (!std::isfinite(x)) throw FormatError("checkpoint: non-finite parameter");
    }
    return s;
}

TrainingState load_checkpoint(const std::filesystem::path& path, const std::optional<DecoderShape>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return load_checkpoint(in, expected);
}

}  // namespace entailkg
