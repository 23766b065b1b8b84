#include "fsr/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fsr/checkpoint.hpp"

namespace fsr {

namespace fs = std::filesystem;

Batch gather_batch(const LoadedSplit& split, const std::vector<BatchItem>& items) {
    std::vector<std::size_t> rows;
    Batch batch;
    for (const auto& item : items) {
        const std::size_t row = split.by_class.at(item.class_id).at(item.sample);
        rows.push_back(row);
        batch.labels.push_back(split.labels[row]);
        batch.ids.push_back(split.ids[row]);
    }
    NoGradGuard no_grad;
    batch.images = index_select(split.images, rows);
    return batch;
}

StepStats train_step(const Batch& batch, Model& model, OptimState& optim, const TrainConfig& cfg, double lr,
                     Rng& rng) {
    Tape::current().clear();
    ParamStore& params = model.params();
    params.zero_grad();

    FeatureBatch features =
        model.extractor().extract(batch.images, batch.labels, batch.ids, params, Mode::train, cfg.similarity);
    const std::size_t n = features.size();

    Tensor similarity;
    std::vector<PairAssignment> pairs;
    VirtualSet virtuals;
    Tensor maps = features.maps;
    if (cfg.efa) {
        similarity = similarity_matrix(features.embeddings);
        pairs = search_pairs(similarity, features.labels);
        virtuals = synthesize_virtual(features, pairs, rng, beta_sampler(cfg.beta_a, cfg.beta_b));
        if (virtuals.size() > 0) maps = concat({features.maps, virtuals.maps});
    }

    Classification out = model.head(maps, Mode::train);
    Tensor probs_real = slice(out.probs, 0, n);
    Tensor probs_virtual = virtuals.size() > 0 ? slice(out.probs, n, n + virtuals.size()) : Tensor();
    Tensor l_reg = recognition_loss(probs_real, features.labels, probs_virtual, virtuals.items);

    Tensor l_ada = Tensor::scalar(0.0);
    if (cfg.efa && cfg.ada && cfg.lambda2 != 0.0) {
        auto psi = dynamic_intensity(pairs, benchmark_distance(pairs), cfg.rho);
        l_ada = adaptive_loss(similarity, pairs, psi);
    }

    StepStats stats;
    stats.loss = total_loss(l_reg, l_ada, cfg.lambda1, cfg.lambda2);
    stats.loss.rho = cfg.rho;
    stats.virtual_count = virtuals.size();
    if (stats.loss.l_total.requires_grad()) stats.loss.l_total.backward();
    sgd_step(params, optim, lr);
    Tape::current().clear();
    return stats;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "epoch,lr,l_reg,l_ada,l_total,test_accuracy\n";
    for (const auto& m : history)
        os << m.epoch << ',' << m.lr << ',' << m.l_reg << ',' << m.l_ada << ',' << m.l_total << ','
           << m.test_accuracy << '\n';
    return os.str();
}

double accuracy(const std::vector<std::size_t>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: size mismatch");
    if (preds.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == static_cast<std::size_t>(labels[i]);
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path.string() + ": cannot write");
    out << text;
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace

FitResult fit(const DatasetIndex& dataset, const TrainConfig& cfg, const fs::path& out_dir, std::ostream* log) {
    cfg.validate();
    const LoadedSplit train = load_split(dataset, Split::train, cfg.image_size);
    const LoadedSplit test = load_split(dataset, Split::test, cfg.image_size);
    fs::create_directories(out_dir);

    ModelConfig mc{dataset.classes.size(), cfg.image_size, cfg.dhfr};
    FitResult result{Model(mc, cfg.seed), OptimState{cfg.momentum, cfg.weight_decay, {}}, {}, {}, test.labels, 0.0};
    Model& model = result.model;
    const Schedule schedule = cfg.schedule();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, schedule);
        const BatchPlan plan =
            plan_batches(dataset.class_counts(Split::train),
                         cfg.classes_per_batch, cfg.samples_per_class, cfg.seed, epoch);
        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr;
        for (std::size_t b = 0; b < plan.batches.size(); ++b) {
            Rng rng = keyed_rng({cfg.seed, epoch, b, 0xa1fa});
            StepStats stats;
            try {
                stats = train_step(gather_batch(train, plan.batches[b]), model, result.optim, cfg, lr, rng);
            } catch (const DomainError& e) {
                throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            m.l_reg += stats.loss.l_reg.item();
            m.l_ada += stats.loss.l_ada.item();
            m.l_total += stats.loss.l_total.item();
        }
        const double nb = static_cast<double>(plan.batches.size());
        m.l_reg /= nb;
        m.l_ada /= nb;
        m.l_total /= nb;
        if (!std::isfinite(m.l_total))
            throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch));
        m.test_accuracy = accuracy(model.predict(test.images, cfg.eval_threads), test.labels);
        result.history.push_back(m);
        if (log)
            *log << "epoch " << epoch << " lr=" << lr << " l_reg=" << m.l_reg << " l_ada=" << m.l_ada
                 << " l_total=" << m.l_total << " test_acc=" << m.test_accuracy << std::endl;
    }

    write_text(out_dir / "metrics.csv", metrics_csv(result.history));
    const fs::path ckpt_dir = out_dir / "checkpoint";
    save_checkpoint(ckpt_dir, model, result.optim, dataset.classes, cfg.epochs);
    Model stored = restore_model(load_checkpoint(ckpt_dir));
    result.test_predictions = stored.predict(test.images, cfg.eval_threads);
    result.final_accuracy = accuracy(result.test_predictions, test.labels);
    return result;
}

}  // namespace fsr
