#include "fsr/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fsr/trainer.hpp"

namespace fsr {

namespace fs = std::filesystem;

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t t) const {
    std::uint64_t n = 0;
    for (std::size_t p = 0; p < classes; ++p) n += at(t, p);
    return n;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t p) const {
    std::uint64_t n = 0;
    for (std::size_t t = 0; t < classes; ++t) n += at(t, p);
    return n;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& preds, const std::vector<int>& labels, std::size_t k) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("confusion: " + std::to_string(preds.size()) + " predictions for " +
                                    std::to_string(labels.size()) + " labels");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k || preds[i] >= k)
            throw std::out_of_range("confusion: class id outside [0," + std::to_string(k) + ") at sample " +
                                    std::to_string(i));
        ++cm.at(static_cast<std::size_t>(labels[i]), preds[i]);
    }
    return cm;
}

ConfusionMatrix merge(const ConfusionMatrix& a, const ConfusionMatrix& b) {
    if (a.classes != b.classes) throw std::invalid_argument("merge: class count mismatch");
    ConfusionMatrix out = a;
    for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += b.counts[i];
    return out;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    const std::size_t k = cm.classes;
    const std::uint64_t total = cm.total();
    if (k == 0 || total == 0) throw std::invalid_argument("metrics: empty confusion matrix");
    MetricsReport r;
    std::uint64_t trace = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double tp = static_cast<double>(cm.at(i, i));
        trace += cm.at(i, i);
        const double row = static_cast<double>(cm.row_sum(i));
        const double col = static_cast<double>(cm.col_sum(i));
        double rec = 0.0, prec = 0.0, f = 0.0;
        if (row > 0) rec = tp / row; else r.zero_denominator = true;
        if (col > 0) prec = tp / col; else r.zero_denominator = true;
        if (rec + prec > 0) f = 2.0 * prec * rec / (prec + rec);
        r.recall.push_back(rec);
        r.precision.push_back(prec);
        r.f1.push_back(f);
        r.macro_recall += rec;
        r.macro_precision += prec;
        r.macro_f1 += f;
    }
    r.macro_recall /= static_cast<double>(k);
    r.macro_precision /= static_cast<double>(k);
    r.macro_f1 /= static_cast<double>(k);
    r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    return r;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << "true\\pred";
    for (const auto& n : class_names) os << ',' << n;
    os << '\n';
    for (std::size_t t = 0; t < cm.classes; ++t) {
        os << class_names.at(t);
        for (std::size_t p = 0; p < cm.classes; ++p) os << ',' << cm.at(t, p);
        os << '\n';
    }
    return os.str();
}

std::string format_report(const MetricsReport& r, const std::vector<std::string>& class_names) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "class,recall,precision,f1\n";
    for (std::size_t i = 0; i < r.recall.size(); ++i)
        os << class_names.at(i) << ',' << r.recall[i] << ',' << r.precision[i] << ',' << r.f1[i] << '\n';
    os << "macro_recall=" << r.macro_recall << '\n';
    os << "macro_precision=" << r.macro_precision << '\n';
    os << "macro_f1=" << r.macro_f1 << '\n';
    os << "accuracy=" << r.accuracy << '\n';
    if (r.zero_denominator) os << "warning=zero_denominator\n";
    return os.str();
}

const std::vector<AblationConfig>& ablation_configs() {
    static const std::vector<AblationConfig> configs{
        {"V0", false, false, false}, {"V1", true, false, false}, {"V2", true, true, false},
        {"V3", true, false, true},   {"V4", false, false, true}, {"full", true, true, true},
    };
    return configs;
}

std::string ablation_csv_header(const std::vector<std::string>& class_names) {
    std::string h = "config,seed,accuracy";
    for (const auto& n : class_names) h += "," + n;
    return h;
}

std::string ablation_csv_row(const AblationRow& row) {
    std::ostringstream os;
    os << std::setprecision(17) << row.config << ',' << row.seed << ',' << row.accuracy;
    for (double v : row.per_class) os << ',' << v;
    return os.str();
}

std::vector<AblationRow> read_ablation_csv(const fs::path& path, std::size_t classes) {
    std::vector<AblationRow> rows;
    std::ifstream in(path);
    if (!in) return rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        // A partially written trailing line is dropped and rerun.
        if (cells.size() != 3 + classes) continue;
        try {
            AblationRow r;
            r.config = cells[0];
            r.seed = std::stoull(cells[1]);
            r.accuracy = std::stod(cells[2]);
            for (std::size_t c = 0; c < classes; ++c) r.per_class.push_back(std::stod(cells[3 + c]));
            rows.push_back(std::move(r));
        } catch (const std::exception&) {
        }
    }
    return rows;
}

namespace {

struct Job {
    std::size_t slot;
    AblationConfig config;
    std::uint64_t seed;
};

}  // namespace

std::vector<AblationRow> run_ablation(const DatasetIndex& dataset, const TrainConfig& base,
                                      const std::vector<std::uint64_t>& seeds, const AblationOptions& options) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds given");
    const auto& configs = ablation_configs();
    const std::size_t k = dataset.classes.size();
    std::vector<std::optional<AblationRow>> slots(configs.size() * seeds.size());

    std::map<std::pair<std::string, std::uint64_t>, AblationRow> done;
    if (!options.csv.empty())
        for (auto& r : read_ablation_csv(options.csv, k)) done[{r.config, r.seed}] = r;

    std::vector<Job> jobs;
    for (std::size_t c = 0; c < configs.size(); ++c)
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const std::size_t slot = c * seeds.size() + s;
            auto it = done.find({configs[c].name, seeds[s]});
            if (it != done.end())
                slots[slot] = it->second;
            else
                jobs.push_back({slot, configs[c], seeds[s]});
        }

    std::mutex mu;
    std::ofstream csv;
    if (!options.csv.empty()) {
        if (options.csv.has_parent_path()) fs::create_directories(options.csv.parent_path());
        const bool fresh = done.empty();
        csv.open(options.csv, fresh ? std::ios::trunc : std::ios::app);
        if (!csv) throw std::runtime_error(options.csv.string() + ": cannot write");
        if (fresh) csv << ablation_csv_header(dataset.classes) << '\n' << std::flush;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            const Job& job = jobs[j];
            TrainConfig cfg = base;
            cfg.efa = job.config.efa;
            cfg.ada = job.config.ada;
            cfg.dhfr = job.config.dhfr;
            cfg.seed = job.seed;
            try {
                const fs::path dir = options.out_dir / job.config.name / ("seed_" + std::to_string(job.seed));
                FitResult fr = fit(dataset, cfg, dir);
                const MetricsReport rep = metrics(confusion(fr.test_predictions, fr.test_labels, k));
                AblationRow row{job.config.name, job.seed, fr.final_accuracy, rep.recall};
                std::lock_guard lock(mu);
                if (csv.is_open()) csv << ablation_csv_row(row) << '\n' << std::flush;
                if (options.log)
                    *options.log << "ablation " << row.config << " seed=" << row.seed << " accuracy=" << row.accuracy
                                 << std::endl;
                slots[job.slot] = std::move(row);
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                if (!failure)
                    failure = std::make_exception_ptr(std::runtime_error(
                        "ablation config " + job.config.name + " seed " + std::to_string(job.seed) + ": " + e.what()));
            }
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, jobs.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<AblationRow> rows;
    for (auto& s : slots) rows.push_back(*s);
    if (csv.is_open()) {
        csv.close();
        std::ofstream out(options.csv, std::ios::trunc);
        out << ablation_csv_header(dataset.classes) << '\n';
        for (const auto& r : rows) out << ablation_csv_row(r) << '\n';
    }
    return rows;
}

std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRow>& rows) {
    std::vector<AblationSummary> out;
    for (const auto& c : ablation_configs()) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : rows)
            if (r.config == c.name) sum += r.accuracy, ++n;
        if (n) out.push_back({c.name, sum / static_cast<double>(n)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const AblationSummary& a, const AblationSummary& b) { return a.mean_accuracy > b.mean_accuracy; });
    return out;
}

}  // namespace fsr
