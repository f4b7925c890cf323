// Operator entry point: key generation, training across all collaboration
// modes, forest comparison, benchmarking, and (federated) prediction.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <sys/stat.h>

#include <CLI11.hpp>

#include "sfxb/config.hpp"
#include "sfxb/errors.hpp"
#include "sfxb/he.hpp"
#include "sfxb/inference.hpp"
#include "sfxb/report.hpp"

namespace fs = std::filesystem;
using namespace sfxb;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

int cmd_keygen(unsigned bits, std::uint64_t seed, const std::string &out_dir,
               const std::string &name) {
    if (bits != 512 && bits != 1024 && bits != 2048 && bits != 3072) {
        std::cerr << "keygen: --bits " << bits
                  << " not supported; allowed key sizes: 512 (tests only), 1024, 2048, 3072\n";
        return kExitUsage;
    }
    PaillierKeypair kp = keygen(bits, seed);
    fs::create_directories(out_dir);
    std::string pub_path = out_dir + "/" + name + ".pub";
    std::string priv_path = out_dir + "/" + name + ".priv";
    write_text_file(pub_path, serialize_public_key(kp.pub));
    write_text_file(priv_path, serialize_private_key(kp));
    ::chmod(pub_path.c_str(), 0644);
    ::chmod(priv_path.c_str(), 0600); // private half: owner-only
    std::cout << "wrote " << pub_path << " and " << priv_path << " (key id "
              << key_id_of(kp.pub.n) << ")\n";
    return kExitOk;
}

int cmd_train(const std::string &config_path, const std::string &out_dir, bool threads) {
    RunConfig cfg = load_run_config(config_path);
    if (threads) cfg.threaded = true;
    TrainOutput out = run_training(cfg);

    fs::create_directories(out_dir);
    write_text_file(out_dir + "/forest.txt", serialize_forest(out.forest));
    write_text_file(out_dir + "/report.json", report_to_json(out.report));
    {
        std::ofstream t(out_dir + "/transcript.jsonl", std::ios::binary | std::ios::trunc);
        if (!t) throw Error("cannot write file: " + out_dir + "/transcript.jsonl");
        out.transcript.to_jsonl(t);
    }
    for (const PartialModel &pm : out.partials)
        write_text_file(out_dir + "/partial_party" + std::to_string(pm.party_id) + ".txt",
                        serialize_partial(pm));

    std::cout << "mode: " << out.report.mode << " (" << out.report.plugin << ")\n"
              << "forest: " << out.forest.trees.size() << " trees, fingerprint "
              << out.report.fingerprint << "\n"
              << "train log-loss " << out.report.metrics.train_logloss << ", accuracy "
              << out.report.metrics.train_accuracy << "\n"
              << "counters: enc " << out.report.counters.encryptions << ", add "
              << out.report.counters.ciphertext_additions << ", dec "
              << out.report.counters.decryptions << ", bytes "
              << out.report.counters.bytes_transferred << "\n"
              << "artifacts in " << out_dir << "\n";
    return kExitOk;
}

std::string forest_path_of(const std::string &arg) {
    if (fs::is_directory(arg)) return arg + "/forest.txt";
    return arg;
}

int cmd_compare(const std::string &a_path, const std::string &b_path, double leaf_tolerance) {
    Forest a = parse_forest(read_text_file(forest_path_of(a_path)));
    Forest b = parse_forest(read_text_file(forest_path_of(b_path)));
    std::vector<std::string> diff = forest_diff(a, b, leaf_tolerance);
    if (diff.empty()) {
        std::cout << "forests are structurally equal\n";
        return kExitOk;
    }
    std::size_t shown = std::min<std::size_t>(diff.size(), 50);
    for (std::size_t i = 0; i < shown; ++i) std::cout << diff[i] << "\n";
    if (shown < diff.size())
        std::cout << "... " << (diff.size() - shown) << " more difference(s)\n";
    std::cout << diff.size() << " difference(s)\n";
    return 1; // distinct from 0 == equal
}

int cmd_bench(const std::string &config_path, int repeats, const std::string &out_dir) {
    RunConfig cfg = load_run_config(config_path);
    BenchResult res = run_bench(cfg, repeats);
    std::cout << bench_table(res);
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/bench.json", bench_to_json(res));
    return kExitOk;
}

void write_predictions(const std::string &out_path, const std::vector<double> &probs) {
    std::ostringstream buf;
    for (double p : probs) buf << format_double(p) << "\n";
    if (out_path.empty() || out_path == "-") {
        std::cout << buf.str();
    } else {
        write_text_file(out_path, buf.str());
        std::cout << "wrote " << probs.size() << " predictions to " << out_path << "\n";
    }
}

int cmd_predict(const std::string &forest_path, const std::vector<std::string> &partial_paths,
                const std::vector<std::string> &data_paths, const std::string &label,
                const std::string &out_path) {
    if (!forest_path.empty()) {
        if (data_paths.size() != 1)
            throw Error("forest prediction takes exactly one --data csv");
        Forest forest = parse_forest(read_text_file(forest_path_of(forest_path)));
        DataMatrix data = load_csv(data_paths[0], label);
        std::vector<double> probs = predict(forest, data);
        write_predictions(out_path, probs);
        if (data.label) {
            std::cout << "log-loss " << log_loss(*data.label, probs) << ", accuracy "
                      << accuracy(*data.label, probs) << "\n";
        }
        return kExitOk;
    }
    if (partial_paths.empty()) throw Error("predict needs --forest or --partial");
    if (partial_paths.size() != data_paths.size())
        throw Error("need one --data csv per --partial file, in the same order");
    std::vector<PartialModel> partials;
    std::vector<PartyShard> shards;
    for (std::size_t i = 0; i < partial_paths.size(); ++i) {
        PartialModel pm = parse_partial(read_text_file(partial_paths[i]));
        PartyShard s;
        s.party_id = static_cast<int>(pm.party_id);
        s.role = pm.is_active ? PartyRole::active : PartyRole::passive;
        s.data = load_csv(data_paths[i], pm.is_active ? label : std::string{});
        shards.push_back(std::move(s));
        partials.push_back(std::move(pm));
    }
    std::vector<double> probs = federated_predict(partials, shards);
    write_predictions(out_path, probs);
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"secure federated gradient-boosted trees"};
    app.require_subcommand(1);

    auto *kg = app.add_subcommand("keygen", "generate a Paillier keypair");
    unsigned bits = 2048;
    std::uint64_t seed = 0;
    std::string kg_out = ".", kg_name = "key";
    kg->add_option("--bits", bits, "modulus size (512 test-only, 1024, 2048, 3072)");
    kg->add_option("--seed", seed, "deterministic RNG seed (0: nondeterministic)");
    kg->add_option("--out", kg_out, "output directory");
    kg->add_option("--name", kg_name, "key file stem");

    auto *tr = app.add_subcommand("train", "train per a run config");
    std::string tr_config, tr_out = "run_out";
    bool tr_threads = false;
    tr->add_option("config", tr_config, "run config file")->required();
    tr->add_option("--out", tr_out, "artifact directory");
    tr->add_flag("--threads", tr_threads, "parallelize party-local work");

    auto *cp = app.add_subcommand("compare", "structural diff of two forests");
    std::string cp_a, cp_b;
    double cp_tol = 0.0;
    cp->add_option("a", cp_a, "forest file or run directory")->required();
    cp->add_option("b", cp_b, "forest file or run directory")->required();
    cp->add_option("--leaf-tolerance", cp_tol, "allowed |leaf weight delta|");

    auto *bn = app.add_subcommand("bench", "median phase times over repeats");
    std::string bn_config, bn_out = ".";
    int bn_repeats = 3;
    bn->add_option("config", bn_config, "run config file")->required();
    bn->add_option("--repeats", bn_repeats, "runs per variant")
        ->check(CLI::PositiveNumber);
    bn->add_option("--out", bn_out, "directory for bench.json");

    auto *pr = app.add_subcommand("predict", "score a csv with a forest or partial models");
    std::string pr_forest, pr_label, pr_out;
    std::vector<std::string> pr_partials, pr_data;
    pr->add_option("--forest", pr_forest, "forest file");
    pr->add_option("--partial", pr_partials, "partial model file (repeatable, one per party)");
    pr->add_option("--data", pr_data, "csv file (repeatable for partials, same order)");
    pr->add_option("--label", pr_label, "label column for metrics (optional)");
    pr->add_option("--out", pr_out, "predictions file ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*kg) return cmd_keygen(bits, seed, kg_out, kg_name);
        if (*tr) return cmd_train(tr_config, tr_out, tr_threads);
        if (*cp) return cmd_compare(cp_a, cp_b, cp_tol);
        if (*bn) return cmd_bench(bn_config, bn_repeats, bn_out);
        if (*pr) return cmd_predict(pr_forest, pr_partials, pr_data, pr_label, pr_out);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
