#include "cmac/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "cmac/errors.hpp"
#include "cmac/rng.hpp"

namespace cmac {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& u) {
    Eigen::MatrixXd z = u;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        z.row(i) /= z.row(i).norm();
    }
    return z;
}

/// Backward through row normalization: du = (dz - (dz.z) z) / |u|.
Eigen::MatrixXd normalize_rows_backward(const Eigen::MatrixXd& u, const Eigen::MatrixXd& z,
                                        const Eigen::MatrixXd& dz) {
    Eigen::MatrixXd du(u.rows(), u.cols());
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        const double norm = u.row(i).norm();
        const double proj = dz.row(i).dot(z.row(i));
        du.row(i) = (dz.row(i) - proj * z.row(i)) / norm;
    }
    return du;
}

struct AdamState {
    Eigen::MatrixXd m;
    Eigen::MatrixXd v;

    explicit AdamState(Eigen::Index rows, Eigen::Index cols)
        : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}

    void update(Eigen::MatrixXd& w, const Eigen::MatrixXd& grad, const TrainConfig& cfg, int t) {
        m = kBeta1 * m + (1.0 - kBeta1) * grad;
        v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(kBeta1, t);
        const double bc2 = 1.0 - std::pow(kBeta2, t);
        const Eigen::MatrixXd mhat = m / bc1;
        const Eigen::MatrixXd vhat = v / bc2;
        w -= cfg.learning_rate *
             (mhat.array() / (vhat.array().sqrt() + kAdamEps) + cfg.weight_decay * w.array())
                 .matrix();
    }
};

} // namespace

Encoders init_encoders(int d_in, int d_emb, std::uint64_t seed) {
    if (d_in < 1 || d_emb < 1) {
        throw SchemaError("init_encoders: dimensions must be >= 1");
    }
    Rng rng(Rng::derive(seed, 0x656e63ULL));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
    Encoders enc;
    enc.image_weights.resize(d_in, d_emb);
    enc.text_weights.resize(d_in, d_emb);
    for (int r = 0; r < d_in; ++r) {
        for (int c = 0; c < d_emb; ++c) enc.image_weights(r, c) = scale * rng.gaussian();
    }
    for (int r = 0; r < d_in; ++r) {
        for (int c = 0; c < d_emb; ++c) enc.text_weights(r, c) = scale * rng.gaussian();
    }
    return enc;
}

BatchPlan make_batches(const std::vector<SampleRecord>& dataset, int batch_size,
                       std::uint64_t seed, int min_subgroup_batch) {
    if (dataset.empty()) {
        throw EmptySpec("make_batches: empty dataset");
    }
    if (batch_size < 2 * min_subgroup_batch) {
        throw SchemaError("make_batches: batch_size must be >= 2 * min_subgroup_batch");
    }
    std::map<SubgroupKey, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        members[dataset[i].subgroup].push_back(i);
    }

    BatchPlan plan;
    plan.single_subgroup_warning = members.size() < 2;
    const std::size_t n_batches =
        (dataset.size() + static_cast<std::size_t>(batch_size) - 1) /
        static_cast<std::size_t>(batch_size);
    plan.batches.assign(n_batches, {});

    // Each subgroup is shuffled and dealt into as many chunks of
    // >= min_subgroup_batch members as fit, then chunks rotate across
    // batches so every batch sees several subgroups.
    std::size_t ordinal = 0;
    for (auto& [key, idx] : members) {
        Rng rng(Rng::derive(seed, 0xba7c4ULL + ordinal));
        rng.shuffle(idx);
        std::size_t chunks = idx.size() / static_cast<std::size_t>(min_subgroup_batch);
        chunks = std::clamp<std::size_t>(chunks, 1, n_batches);
        std::size_t pos = 0;
        for (std::size_t c = 0; c < chunks; ++c) {
            const std::size_t take = (idx.size() - pos) / (chunks - c);
            auto& batch = plan.batches[(ordinal + c) % n_batches];
            for (std::size_t k = 0; k < take; ++k) batch.push_back(idx[pos++]);
        }
        ++ordinal;
    }
    std::erase_if(plan.batches, [](const auto& b) { return b.empty(); });
    return plan;
}

TrainedModel train(const std::vector<SampleRecord>& dataset,
                   const ClassPrototypes& class_texts,
                   const TrainConfig& cfg) {
    if (dataset.empty()) {
        throw EmptySpec("train: empty dataset");
    }
    const int d_in = static_cast<int>(dataset.front().features.size());
    const int num_classes = class_texts.num_classes();
    if (class_texts.dim() != d_in) {
        throw DimensionMismatch("train: class texts have dim " +
                                std::to_string(class_texts.dim()) + ", features have " +
                                std::to_string(d_in));
    }
    for (const auto& rec : dataset) {
        if (rec.label < 0 || rec.label >= num_classes) {
            throw InvalidClassIndex("train: sample " + std::to_string(rec.id) +
                                    " has label outside the prototype classes");
        }
    }
    const Eigen::MatrixXd texts_in = validate_unit_rows(class_texts.class_texts, "class text");

    TrainedModel model;
    model.class_texts.class_texts = texts_in;
    model.encoders = init_encoders(d_in, cfg.d_emb, cfg.seed);
    model.encoders.temperature = cfg.temperature;

    // Each sample's paired text: its class template plus a per-sample
    // perturbation that is a fixed property of the sample (derived from
    // its id), re-normalized.
    Eigen::MatrixXd sample_texts(static_cast<Eigen::Index>(dataset.size()), d_in);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Rng jitter(Rng::derive(0x7e3c7ULL, static_cast<std::uint64_t>(dataset[i].id)));
        Eigen::VectorXd t = texts_in.row(dataset[i].label);
        for (int d = 0; d < d_in; ++d) t(d) += cfg.text_jitter * jitter.gaussian();
        sample_texts.row(static_cast<Eigen::Index>(i)) = t / t.norm();
    }

    LossConfig loss_cfg;
    loss_cfg.lambda_cmac = cfg.effective_lambda();
    loss_cfg.temperature = cfg.temperature;
    loss_cfg.kernel = cfg.kernel;
    loss_cfg.min_subgroup_batch = cfg.min_subgroup_batch;

    AdamState adam_img(d_in, cfg.d_emb);
    AdamState adam_txt(d_in, cfg.d_emb);
    int step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const BatchPlan plan = make_batches(dataset, cfg.batch_size,
                                            Rng::derive(cfg.seed, 0xe90c5ULL + epoch),
                                            cfg.min_subgroup_batch);
        model.single_subgroup_warning |= plan.single_subgroup_warning;

        EpochLosses epoch_losses;
        for (std::size_t bi = 0; bi < plan.batches.size(); ++bi) {
            const auto& batch = plan.batches[bi];
            const int nb = static_cast<int>(batch.size());

            Eigen::MatrixXd x(nb, d_in);
            Eigen::MatrixXd x_txt(nb, d_in);
            BatchAnnotations groups;
            groups.subgroup_of.reserve(batch.size());
            for (int k = 0; k < nb; ++k) {
                const std::size_t idx = batch[static_cast<std::size_t>(k)];
                x.row(k) = dataset[idx].features;
                x_txt.row(k) = sample_texts.row(static_cast<Eigen::Index>(idx));
                groups.subgroup_of.push_back(dataset[idx].subgroup);
            }

            const Eigen::MatrixXd u_img = x * model.encoders.image_weights;
            const Eigen::MatrixXd z_img = normalize_rows(u_img);
            const Eigen::MatrixXd u_txt = x_txt * model.encoders.text_weights;
            const Eigen::MatrixXd z_txt = normalize_rows(u_txt);

            SimilarityBatch sim{(z_img * z_txt.transpose()) / cfg.temperature, cfg.temperature};
            LossConfig step_cfg = loss_cfg;
            step_cfg.lambda_cmac = epoch < cfg.warmup_epochs ? 0.0 : loss_cfg.lambda_cmac;

            double batch_clip = 0.0, batch_cmac = 0.0, batch_total = 0.0;
            Eigen::MatrixXd dz_img, dz_txt;
            Eigen::MatrixXd gw_proto;
            bool have_proto_grad = false;

            if (cfg.fairness_scores == FairnessScores::batch_margins) {
                const TotalResult res = total_loss(sim, groups, step_cfg);
                batch_clip = res.clip;
                batch_cmac = res.cmac;
                batch_total = res.loss;
                dz_img = (res.grad * z_txt) / cfg.temperature;
                dz_txt = (res.grad.transpose() * z_img) / cfg.temperature;
            } else {
                // Fairness on bounded diagnostic certainty: sigma of the
                // class-prototype margin.  Sharpness comes from the
                // temperature; saturated samples stop contributing.
                const ClipResult clip = clip_loss(sim);
                batch_clip = clip.loss;
                dz_img = (clip.grad * z_txt) / cfg.temperature;
                dz_txt = (clip.grad.transpose() * z_img) / cfg.temperature;
                if (step_cfg.lambda_cmac > 0.0) {
                    const Eigen::MatrixXd u_proto = texts_in * model.encoders.text_weights;
                    const Eigen::MatrixXd z_proto = normalize_rows(u_proto);
                    const Eigen::MatrixXd class_sims = z_img * z_proto.transpose();
                    std::vector<double> certainty(static_cast<std::size_t>(nb));
                    std::vector<int> rival(static_cast<std::size_t>(nb));
                    for (int k = 0; k < nb; ++k) {
                        const std::size_t idx = batch[static_cast<std::size_t>(k)];
                        const int y = dataset[idx].label;
                        int best = -1;
                        for (int c = 0; c < num_classes; ++c) {
                            if (c == y) continue;
                            if (best < 0 || class_sims(k, c) > class_sims(k, best)) best = c;
                        }
                        rival[static_cast<std::size_t>(k)] = best;
                        const double margin =
                            (class_sims(k, y) - class_sims(k, best)) / cfg.temperature;
                        certainty[static_cast<std::size_t>(k)] =
                            1.0 / (1.0 + std::exp(-margin));
                    }
                    const CmacResult cmac = cmac_loss(certainty, groups, step_cfg);
                    batch_cmac = cmac.loss;
                    Eigen::MatrixXd dz_proto = Eigen::MatrixXd::Zero(num_classes, cfg.d_emb);
                    for (int k = 0; k < nb; ++k) {
                        const std::size_t idx = batch[static_cast<std::size_t>(k)];
                        const int y = dataset[idx].label;
                        const int c = rival[static_cast<std::size_t>(k)];
                        const double ck = certainty[static_cast<std::size_t>(k)];
                        const double g = step_cfg.lambda_cmac *
                                         cmac.grad[static_cast<std::size_t>(k)] * ck *
                                         (1.0 - ck) / cfg.temperature;
                        dz_img.row(k) += g * (z_proto.row(y) - z_proto.row(c));
                        dz_proto.row(y) += g * z_img.row(k);
                        dz_proto.row(c) -= g * z_img.row(k);
                    }
                    const Eigen::MatrixXd du_proto =
                        normalize_rows_backward(u_proto, z_proto, dz_proto);
                    gw_proto = texts_in.transpose() * du_proto;
                    have_proto_grad = true;
                }
                batch_total = batch_clip + step_cfg.lambda_cmac * batch_cmac;
            }

            if (!std::isfinite(batch_total)) {
                throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(bi));
            }
            epoch_losses.clip += batch_clip;
            epoch_losses.cmac += batch_cmac;
            epoch_losses.total += batch_total;

            const Eigen::MatrixXd du_img = normalize_rows_backward(u_img, z_img, dz_img);
            const Eigen::MatrixXd du_txt = normalize_rows_backward(u_txt, z_txt, dz_txt);
            const Eigen::MatrixXd gw_img = x.transpose() * du_img;
            Eigen::MatrixXd gw_txt = x_txt.transpose() * du_txt;
            if (have_proto_grad) gw_txt += gw_proto;

            ++step;
            adam_img.update(model.encoders.image_weights, gw_img, cfg, step);
            adam_txt.update(model.encoders.text_weights, gw_txt, cfg, step);
        }
        const double nb = static_cast<double>(plan.batches.size());
        epoch_losses.clip /= nb;
        epoch_losses.cmac /= nb;
        epoch_losses.total /= nb;
        model.history.push_back(epoch_losses);
    }

    model.prototypes.class_texts = normalize_rows(texts_in * model.encoders.text_weights);
    return model;
}

LabeledScores evaluate_model(const TrainedModel& model,
                             const std::vector<SampleRecord>& dataset) {
    if (dataset.empty()) {
        throw EmptySpec("evaluate_model: empty dataset");
    }
    if (model.prototypes.num_classes() != 2) {
        throw InvalidClassIndex("evaluate_model: binary evaluation expects two prototypes");
    }
    const int d_in = static_cast<int>(model.encoders.image_weights.rows());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(dataset.size()), d_in);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = dataset[i].features;
    }
    const Eigen::MatrixXd z = normalize_rows(x * model.encoders.image_weights);
    const Eigen::MatrixXd probs =
        class_probabilities(z, model.prototypes, model.encoders.temperature);

    LabeledScores out;
    out.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        ScoredRow row;
        row.id = dataset[i].id;
        row.subgroup = dataset[i].subgroup;
        row.true_label = dataset[i].label;
        row.score = probs(static_cast<Eigen::Index>(i), 1);
        row.predicted = row.score >= 0.5 ? 1 : 0;
        out.push_back(std::move(row));
    }
    return out;
}

ClassPrototypes default_class_texts(int d_in, int num_classes) {
    if (d_in < 1 || num_classes < 2) {
        throw SchemaError("default_class_texts: need d_in >= 1 and >= 2 classes");
    }
    ClassPrototypes protos;
    protos.class_texts.resize(num_classes, d_in);
    for (int c = 0; c < num_classes; ++c) {
        Rng rng(Rng::derive(0x7e575ULL, static_cast<std::uint64_t>(c)));
        for (int d = 0; d < d_in; ++d) protos.class_texts(c, d) = rng.gaussian();
        protos.class_texts.row(c) /= protos.class_texts.row(c).norm();
    }
    return protos;
}

} // namespace cmac
