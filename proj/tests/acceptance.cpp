// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. argv[1] is the path to the fedcyte CLI binary.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedcyte/aggregation.hpp"
#include "fedcyte/config.hpp"
#include "fedcyte/orchestrator.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace fedcyte;
namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_tmp;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + g_cli + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Outcome aggregation_oracles() {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> normal(0.0, 5.0);
    const auto t0 = Clock::now();
    double worst_avg = 0.0, worst_med = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t clients = 2 + gen() % 6;
        const std::size_t dim = 1 + gen() % 50;
        std::vector<ClientUpdate> updates;
        std::vector<std::vector<double>> xs;
        std::vector<std::int64_t> ns;
        for (std::size_t i = 0; i < clients; ++i) {
            std::vector<double> v(dim);
            for (auto& x : v) x = normal(gen);
            const auto n = 1 + static_cast<std::int64_t>(gen() % 5000);
            xs.push_back(v);
            ns.push_back(n);
            updates.push_back({"c" + std::to_string(i), ParamVector(v), n});
        }
        const auto avg = fedavg(updates);
        const auto med = fedmedian(updates, {false, 1.5});
        const auto ref = oracle::weighted_mean(xs, ns);
        for (std::size_t j = 0; j < dim; ++j) {
            worst_avg = std::max(worst_avg, std::abs(avg[j] - ref[j]));
            std::vector<double> col;
            for (const auto& x : xs) col.push_back(x[j]);
            worst_med = std::max(worst_med, std::abs(med[j] - oracle::median_by_rank(col)));
        }
    }
    const double secs = seconds_since(t0);
    return {worst_avg <= 1e-12 && worst_med <= 1e-12 && secs < 10.0,
            fmt("max |fedavg - oracle| = %.3g, max |fedmedian - oracle| = %.3g, %.2f s", worst_avg, worst_med, secs)};
}

Outcome scalar_adam() {
    const FedOptConfig cfg{};
    const std::vector<double> deltas{0.3, -1.7, 1e-4, 0.0};
    ParamVector w(std::vector<double>{0.5, -0.5, 2.0, 1.0});
    auto state = ServerOptState::fresh(w);
    std::vector<oracle::ScalarAdam> ref(deltas.size(), {cfg.server_lr, cfg.beta1, cfg.beta2, cfg.tau});
    std::vector<double> ref_w(w.values().begin(), w.values().end());
    double worst = 0.0;
    for (int step = 0; step < 10; ++step) {
        std::vector<double> target(deltas.size());
        for (std::size_t j = 0; j < deltas.size(); ++j) target[j] = w[j] + deltas[j];
        const std::vector<ClientUpdate> u{{"a", ParamVector(target), 3}, {"b", ParamVector(target), 5}};
        auto r = fedopt_step(w, u, std::move(state), cfg);
        w = std::move(r.params);
        state = std::move(r.state);
        for (std::size_t j = 0; j < deltas.size(); ++j) {
            ref_w[j] = ref[j].step(ref_w[j], deltas[j]);
            worst = std::max(worst, std::abs(w[j] - ref_w[j]));
        }
    }
    return {worst <= 1e-10, fmt("max |fedopt - scalar Adam| over 10 steps = %.3g", worst)};
}

Outcome gradient_check() {
    std::mt19937_64 gen(3);
    double worst = 0.0;
    bool frozen_zero = true;
    for (auto kind : {ModelKind::SoftmaxRegression, ModelKind::Mlp1h})
        for (int i = 0; i < 200; ++i) {
            const auto r = gradcheck::check(gradcheck::random_instance(gen, kind), 1e-5);
            worst = std::max(worst, r.max_rel_error);
            frozen_zero = frozen_zero && r.frozen_zero;
        }
    return {worst < 1e-4 && frozen_zero,
            fmt("max relative error = %.3g over 400 instances", worst) + (frozen_zero ? "" : ", frozen grad non-zero")};
}

Outcome focal_identities() {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> normal(0.0, 3.0);
    double worst = 0.0;
    FocalConfig ce{0.0, {}, {}};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + gen() % 10;
        std::vector<double> z(k);
        for (auto& v : z) v = normal(gen);
        std::vector<double> p = z;
        detail::softmax_inplace(p);
        const std::size_t y = gen() % k;
        worst = std::max(worst, std::abs(focal_loss(p, y, ce) - oracle::cross_entropy(z, y)));
    }
    // Whole-model path: a softmax regression with W = 0 and bias b has logits b.
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + gen() % 6;
        const ModelSpec spec{ModelKind::SoftmaxRegression, 1, k, 1, 0.0};
        std::vector<double> w(k + k, 0.0);
        std::vector<double> z(k);
        for (std::size_t c = 0; c < k; ++c) w[k + c] = z[c] = normal(gen);
        const std::uint32_t y = static_cast<std::uint32_t>(gen() % k);
        std::vector<std::string> names;
        for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
        const LabeledDataset ds(1, {0.7}, {y}, names);
        const auto lg = loss_and_grad(spec, ParamVector(w), ds, ce);
        worst = std::max(worst, std::abs(lg.loss - oracle::cross_entropy(z, y)));
    }
    const std::vector<double> certain{0.0, 1.0, 0.0};
    const bool zero = focal_loss(certain, 1, FocalConfig{}) == 0.0;

    bool clipped = true;
    for (const auto& name : builtin_profile_names())
        for (double scale : {1.0, 0.1}) {
            const auto prof = builtin_profile(name, 16, scale);
            const auto alpha = alpha_weights(prof.class_counts);
            const double total = static_cast<double>(prof.total());
            for (std::size_t c = 0; c < alpha.size(); ++c) {
                clipped = clipped && alpha[c] >= 0.1 && alpha[c] <= 4.0;
                const double expect = prof.class_counts[c] == 0
                                          ? 4.0
                                          : std::min(4.0, std::max(0.1, 1.0 / std::sqrt(prof.class_counts[c] / total)));
                clipped = clipped && std::abs(alpha[c] - expect) <= 1e-12;
            }
        }
    return {worst <= 1e-12 && zero && clipped,
            fmt("max |focal(g=0) - CE| = %.3g; p_t=1 loss zero: ", worst) + (zero ? "yes" : "no") +
                "; alpha within [0.1, 4.0]: " + (clipped ? "yes" : "no")};
}

Outcome byzantine() {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t dim = 20;
    std::vector<ClientUpdate> updates;
    std::vector<std::vector<double>> honest;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> v(dim);
        for (auto& x : v) x = normal(gen);
        honest.push_back(v);
        updates.push_back({"h" + std::to_string(i), ParamVector(v), 100});
    }
    updates.push_back({"adversary", ParamVector(std::vector<double>(dim, 1e6)), 100});
    const auto honest_mean = oracle::weighted_mean(honest, {100, 100, 100, 100});

    bool inside = true;
    double min_dev = 1e300;
    for (bool filter : {true, false}) {
        const auto med = fedmedian(updates, {filter, 1.5});
        for (std::size_t j = 0; j < dim; ++j) {
            double lo = honest[0][j], hi = honest[0][j];
            for (const auto& h : honest) lo = std::min(lo, h[j]), hi = std::max(hi, h[j]);
            inside = inside && med[j] >= lo && med[j] <= hi;
        }
    }
    const auto avg = fedavg(updates);
    for (std::size_t j = 0; j < dim; ++j) min_dev = std::min(min_dev, std::abs(avg[j] - honest_mean[j]));
    return {inside && min_dev > 1e3,
            std::string("median inside honest box: ") + (inside ? "yes" : "no") +
                fmt("; min per-coordinate FedAvg deviation = %.4g", min_dev)};
}

Outcome proximal_contraction() {
    const std::vector<ClientProfile> p{builtin_profile("client1", 8, 0.05)};
    const auto train = generate_synthetic(p, 8, 4.0, 6)[0];
    std::string detail;
    bool ok = true;
    for (auto kind : {ModelKind::SoftmaxRegression, ModelKind::Mlp1h}) {
        const ModelSpec spec{kind, 8, 11, 16, ModelSpec::default_frozen_fraction(kind)};
        const auto w0 = init_params(spec, 9);
        FocalConfig focal;
        focal.alpha = alpha_weights(train.class_counts());
        TrainerConfig cfg;
        cfg.local_epochs = 3;
        cfg.seed = 10;
        double prev = 1e300;
        detail += std::string(to_string(kind)) + ":";
        for (double mu : {0.0, 0.01, 0.1, 1.0, 10.0}) {
            cfg.prox_mu = mu;
            const double d = l2_distance(local_train(spec, w0, train, cfg, focal).params, w0);
            ok = ok && d <= prev + 1e-9;
            prev = d;
            detail += fmt(" %.4f", d);
        }
        detail += "  ";
    }
    return {ok, "||w_local - w_global|| for mu in {0, 0.01, 0.1, 1, 10}: " + detail};
}

Outcome paradigm_ordering() {
    const auto t0 = Clock::now();
    auto rc = parse_run_config(run_preset("paradigm-compare"), {}, 42);
    std::vector<ExperimentConfig> softmax;
    for (auto& e : rc.experiments)
        if (e.model.kind == ModelKind::SoftmaxRegression) softmax.push_back(e);
    const auto data = load_experiment_data(softmax.front());
    double local_best = 0.0, fed = -1.0, central = -1.0;
    std::string local_detail;
    for (auto& e : softmax) {
        resolve_model_shape(e, data);
        for (const auto& r : run_experiment(e, data, {1, {}})) {
            const double b = r.combined_test.balanced_accuracy;
            if (r.paradigm == Paradigm::LocalPerClient) {
                local_best = std::max(local_best, b);
                local_detail += r.label + fmt(" %.4f, ", b);
            } else if (r.paradigm == Paradigm::Federated) {
                if (e.strategy.kind == StrategyKind::FedMedian) fed = b;
            } else {
                central = b;
            }
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = central >= fed - 0.02 && fed >= local_best + 0.02 && secs < 300.0;
    return {ok, local_detail + fmt("Federated (FedMedian) %.4f, Centralized %.4f, %.2f s", fed, central, secs)};
}

Outcome holdout_grid() {
    const auto out = g_tmp / "holdout";
    if (run_cli("run --preset paradigm-compare --out '" + out.string() + "'") != 0) return {false, "run failed"};
    const auto report = slurp(out / "report.md");
    const auto start = report.find("## Class-wise F1 (holdout institution)");
    if (start == std::string::npos) return {false, "holdout section missing"};
    std::istringstream in(report.substr(start));
    std::string line;
    std::size_t grids = 0;
    bool ok = true;
    std::string detail;
    std::size_t rows = 0;
    bool in_table = false, header_ok = false;
    auto close = [&] {
        if (!in_table) return;
        ++grids;
        ok = ok && rows == 9 && header_ok;
        detail += std::to_string(rows) + " class rows  ";
        in_table = false;
    };
    while (std::getline(in, line)) {
        if (line.starts_with("| Cell Type")) {
            in_table = true;
            rows = 0;
            header_ok = line.find("Federated") != std::string::npos && line.find("Centralized") != std::string::npos;
            continue;
        }
        if (!in_table) continue;
        if (line.starts_with("| ---")) continue;
        if (!line.starts_with("|")) {
            close();
            continue;
        }
        if (!line.starts_with("| **")) ++rows;
    }
    close();
    return {ok && grids == 2, std::to_string(grids) + " holdout grids: " + detail};
}

Outcome determinism() {
    const std::string seed = " --seed 11";
    bool ok = true;
    std::string detail;
    for (const char* preset : {"strategy-sweep", "paradigm-compare"}) {
        std::vector<std::string> results;
        int k = 0;
        for (const char* threads : {"1", "1", "4"}) {
            const auto dir = g_tmp / (std::string("det-") + preset + std::to_string(k++));
            if (run_cli(std::string("run --preset ") + preset + seed + " --out '" + dir.string() + "'",
                        std::string("FEDCYTE_THREADS=") + threads) != 0)
                return {false, std::string("run failed for ") + preset};
            results.push_back(slurp(dir / "results.jsonl") + slurp(dir / "report.md"));
        }
        const bool same = !results[0].empty() && results[0] == results[1] && results[0] == results[2];
        ok = ok && same;
        detail += std::string(preset) + (same ? " identical; " : " differs; ");
    }
    return {ok, detail + "threads 1, 1, 4"};
}

Outcome split_exactness() {
    bool ok = true;
    std::string detail;
    for (std::size_t n : {30u, 300u, 3000u}) {
        const std::vector<ClientProfile> p{
            {"s", {static_cast<std::int64_t>(n / 2), static_cast<std::int64_t>(n / 3),
                   static_cast<std::int64_t>(n - n / 2 - n / 3)},
             FeatureShift::identity(2)}};
        const auto ds = generate_synthetic(p, 2, 3.0, n, {"a", "b", "c"})[0];
        const auto s = split_indices(ds, 123);
        const bool sizes = s.train.size() == 18 * n / 30 && s.validation.size() == 4 * n / 30 &&
                           s.local_test.size() == 4 * n / 30 && s.global_test.size() == 4 * n / 30;
        std::vector<int> seen(n, 0);
        for (const auto* part : {&s.train, &s.validation, &s.local_test, &s.global_test})
            for (auto i : *part) ++seen[i];
        const bool partition = std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
        ok = ok && sizes && partition;
        detail += "n=" + std::to_string(n) + ": " + std::to_string(s.train.size()) + "/" +
                  std::to_string(s.validation.size()) + "/" + std::to_string(s.local_test.size()) + "/" +
                  std::to_string(s.global_test.size()) + (partition ? " partition  " : " NOT a partition  ");
    }
    return {ok, detail};
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <path-to-fedcyte>\n", argv[0]);
        return 2;
    }
    g_cli = argv[1];
    g_tmp = fs::temp_directory_path() / ("fedcyte_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(g_tmp);

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"aggregation oracles", aggregation_oracles},
        {"scalar Adam oracle", scalar_adam},
        {"gradient check", gradient_check},
        {"focal identities", focal_identities},
        {"byzantine robustness", byzantine},
        {"proximal contraction", proximal_contraction},
        {"paradigm ordering", paradigm_ordering},
        {"holdout grid", holdout_grid},
        {"determinism", determinism},
        {"split exactness", split_exactness},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("[%s] %2zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    fs::remove_all(g_tmp);
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
