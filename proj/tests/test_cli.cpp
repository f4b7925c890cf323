// End-to-end checks of the command-line tool: every subcommand is exercised
// through std::system against the real binary (path injected at build time).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "sfxb/config.hpp"
#include "sfxb/dataset.hpp"
#include "sfxb/errors.hpp"
#include "sfxb/gbdt.hpp"
#include "sfxb/inference.hpp"
#include "sfxb/report.hpp"

using namespace sfxb;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "sfxb_cli_scratch";
        fs::remove_all(d);
        fs::create_directories(d);
        // the binary prefers this env var for key lookup; tests control it
        ::unsetenv("SFXB_KEY_DIR");
        return d;
    }();
    return dir;
}

struct CmdResult {
    int code = -1;
    std::string out; // stdout + stderr
};

CmdResult run_cli(const std::string &args) {
    static int seq = 0;
    fs::path log = scratch() / ("cmd" + std::to_string(seq++) + ".log");
    std::string cmd = std::string(SFXB_BIN_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return {WEXITSTATUS(status), read_text_file(log.string())};
}

std::string ini(const std::string &mode, int rows, int features, int seed, int parties,
                const std::string &extra = "") {
    return "[dataset]\nrows = " + std::to_string(rows) +
           "\nfeatures = " + std::to_string(features) + "\nseed = " + std::to_string(seed) +
           "\n[split]\nparties = " + std::to_string(parties) +
           "\n[train]\nnum_trees = 3\nmax_depth = 3\nmax_bin = 16\n[mode]\nmode = " + mode +
           "\n" + extra;
}

std::string write_cfg(const std::string &name, const std::string &text) {
    fs::path p = scratch() / name;
    write_text_file(p.string(), text);
    return p.string();
}

// CSV with columns in training order; optionally only the named features.
void write_csv(const fs::path &p, const DataMatrix &m, const std::vector<std::string> &cols,
               bool with_label) {
    std::string text;
    for (const auto &c : cols) text += c + ",";
    if (with_label) text += m.label_name;
    else text.pop_back();
    text += "\n";
    for (std::size_t i = 0; i < m.n_rows; i++) {
        for (const auto &c : cols) {
            for (const auto &f : m.features)
                if (f.name == c) text += format_double(f.values[i]) + ",";
        }
        if (with_label) text += std::to_string(static_cast<int>((*m.label)[i]));
        else text.pop_back();
        text += "\n";
    }
    write_text_file(p.string(), text);
}

std::string fingerprint_of(const fs::path &run_dir) {
    return report_from_json(read_text_file((run_dir / "report.json").string())).fingerprint;
}

} // namespace

TEST_CASE("keygen is deterministic, restricts sizes, and protects the private half") {
    fs::path d1 = scratch() / "keys1", d2 = scratch() / "keys2";
    CmdResult a = run_cli("keygen --bits 512 --seed 41 --out " + d1.string());
    CHECK(a.code == 0);
    CHECK(a.out.find("key id") != std::string::npos);
    CmdResult b = run_cli("keygen --bits 512 --seed 41 --out " + d2.string() + " --name key");
    CHECK(b.code == 0);
    CHECK(read_text_file((d1 / "key.pub").string()) == read_text_file((d2 / "key.pub").string()));
    CHECK(read_text_file((d1 / "key.priv").string()) ==
          read_text_file((d2 / "key.priv").string()));

    auto perms = fs::status(d1 / "key.priv").permissions();
    CHECK((perms & fs::perms::group_read) == fs::perms::none);
    CHECK((perms & fs::perms::others_read) == fs::perms::none);
    CHECK((perms & fs::perms::owner_read) != fs::perms::none);
    auto pub_perms = fs::status(d1 / "key.pub").permissions();
    CHECK((pub_perms & fs::perms::others_read) != fs::perms::none);

    CmdResult bad = run_cli("keygen --bits 700 --out " + (scratch() / "x").string());
    CHECK(bad.code == 1);
    CHECK(bad.out.find("allowed key sizes") != std::string::npos);
}

TEST_CASE("train writes artifacts and maps failures to distinct exit codes") {
    std::string cfg = write_cfg("cent.ini", ini("centralized", 200, 6, 31, 1));
    fs::path out = scratch() / "cent_run";
    CmdResult r = run_cli("train " + cfg + " --out " + out.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("mode: centralized (passthrough)") != std::string::npos);
    CHECK(fs::exists(out / "forest.txt"));
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "transcript.jsonl"));
    CHECK(fingerprint_of(out).size() == 16);

    std::string bad = write_cfg("bad.ini", "[dataset]\nrows = 1\n");
    CmdResult rb = run_cli("train " + bad);
    CHECK(rb.code == 2);
    CHECK(rb.out.find("config error") != std::string::npos);
    CHECK(rb.out.find("dataset.rows") != std::string::npos);

    CmdResult rm = run_cli("train " + (scratch() / "nosuch.ini").string());
    CHECK(rm.code == 3);
    CHECK(rm.out.find("cannot open file") != std::string::npos);

    CmdResult ru = run_cli("frobnicate");
    CHECK(ru.code == 1);
}

TEST_CASE("federated histogram modes reproduce the centralized forest end to end") {
    std::string cent = write_cfg("c2.ini", ini("centralized", 240, 6, 52, 1));
    std::string vert = write_cfg("v2.ini", ini("vertical", 240, 6, 52, 2));
    fs::path crun = scratch() / "c2_run", vrun = scratch() / "v2_run";
    REQUIRE(run_cli("train " + cent + " --out " + crun.string()).code == 0);
    REQUIRE(run_cli("train " + vert + " --out " + vrun.string()).code == 0);
    CHECK(fs::exists(vrun / "partial_party1.txt"));
    CHECK(fs::exists(vrun / "partial_party2.txt"));

    CmdResult eq = run_cli("compare " + crun.string() + " " + vrun.string());
    CHECK(eq.code == 0);
    CHECK(eq.out.find("structurally equal") != std::string::npos);
    CmdResult self = run_cli("compare " + (crun / "forest.txt").string() + " " + crun.string());
    CHECK(self.code == 0);

    // encrypted run: same forest, nonzero crypto counters
    fs::path kd = scratch() / "kd";
    REQUIRE(run_cli("keygen --bits 512 --seed 9 --out " + kd.string()).code == 0);
    std::string sec = write_cfg("v2s.ini", ini("vertical", 240, 6, 52, 2,
                                               "[security]\nplugin = paillier\nkey_dir = " +
                                                   kd.string() + "\n"));
    fs::path srun = scratch() / "v2s_run";
    CmdResult rs = run_cli("train " + sec + " --out " + srun.string());
    REQUIRE(rs.code == 0);
    CHECK(fingerprint_of(srun) == fingerprint_of(vrun));
    RunReport rep = report_from_json(read_text_file((srun / "report.json").string()));
    CHECK(rep.plugin == "paillier");
    CHECK(rep.counters.encryptions > 0);
    CHECK(run_cli("compare " + srun.string() + " " + crun.string()).code == 0);

    // SFXB_KEY_DIR substitutes for the config key
    std::string sec2 = write_cfg("v2e.ini",
                                 ini("vertical", 240, 6, 52, 2, "[security]\nplugin = paillier\n"));
    CmdResult nokey = run_cli("train " + sec2 + " --out " + (scratch() / "nk").string());
    CHECK(nokey.code == 2);
    CHECK(nokey.out.find("key directory") != std::string::npos);
    ::setenv("SFXB_KEY_DIR", kd.string().c_str(), 1);
    fs::path erun = scratch() / "v2e_run";
    CmdResult env = run_cli("train " + sec2 + " --out " + erun.string());
    ::unsetenv("SFXB_KEY_DIR");
    REQUIRE(env.code == 0);
    CHECK(fingerprint_of(erun) == fingerprint_of(vrun));

    // threaded execution changes nothing about the result
    fs::path trun = scratch() / "v2t_run";
    REQUIRE(run_cli("train " + sec + " --threads --out " + trun.string()).code == 0);
    CHECK(read_text_file((trun / "forest.txt").string()) ==
          read_text_file((vrun / "forest.txt").string()));
}

TEST_CASE("compare reports differences when shards drift apart") {
    std::string extra = "";
    std::string hcfg = write_cfg("h3.ini", "[dataset]\nrows = 300\nfeatures = 6\nseed = 8\n"
                                           "drift = true\n[split]\nparties = 3\n"
                                           "[train]\nnum_trees = 3\nmax_depth = 3\nmax_bin = 16\n"
                                           "[mode]\nmode = horizontal\n");
    std::string ccfg = write_cfg("c3.ini", "[dataset]\nrows = 300\nfeatures = 6\nseed = 8\n"
                                           "drift = true\n[train]\nnum_trees = 3\nmax_depth = 3\n"
                                           "max_bin = 16\n[mode]\nmode = centralized\n");
    fs::path hrun = scratch() / "h3_run", crun = scratch() / "c3_run";
    REQUIRE(run_cli("train " + hcfg + " --out " + hrun.string()).code == 0);
    REQUIRE(run_cli("train " + ccfg + " --out " + crun.string()).code == 0);
    CmdResult diff = run_cli("compare " + hrun.string() + " " + crun.string());
    CHECK(diff.code == 1);
    CHECK(diff.out.find("difference(s)") != std::string::npos);
    CHECK(diff.out.find("threshold") != std::string::npos);

    CmdResult gone = run_cli("compare " + hrun.string() + " " + (scratch() / "nope").string());
    CHECK(gone.code == 3);
}

TEST_CASE("bench emits the table and a json artifact for both plugin variants") {
    fs::path kd = scratch() / "kd_bench";
    REQUIRE(run_cli("keygen --bits 512 --seed 14 --out " + kd.string()).code == 0);
    std::string cfg = write_cfg(
        "b.ini", "[dataset]\nrows = 150\nfeatures = 4\nseed = 2\n[split]\nparties = 2\n"
                 "[train]\nnum_trees = 1\nmax_depth = 2\nmax_bin = 8\n[mode]\nmode = vertical\n"
                 "[security]\nplugin = paillier\nkey_dir = " +
                     kd.string() + "\n");
    fs::path bout = scratch() / "bench_out";
    CmdResult r = run_cli("bench " + cfg + " --repeats 1 --out " + bout.string());
    CHECK(r.code == 0);
    CHECK(r.out.find("vertical/paillier") != std::string::npos);
    CHECK(r.out.find("vertical/passthrough") != std::string::npos);
    CHECK(r.out.find("overhead ratio") != std::string::npos);
    CHECK(fs::exists(bout / "bench.json"));
    CHECK(read_text_file((bout / "bench.json").string()).find("overhead_ratio") !=
          std::string::npos);

    CmdResult rz = run_cli("bench " + cfg + " --repeats 0");
    CHECK(rz.code == 1); // rejected at option parsing
}

TEST_CASE("predict matches the library on files and partial models") {
    // train vertically so partial models exist, against a known synthetic set
    std::string vcfg = write_cfg("p.ini", ini("vertical", 200, 6, 63, 2));
    fs::path vrun = scratch() / "p_run";
    REQUIRE(run_cli("train " + vcfg + " --out " + vrun.string()).code == 0);

    // fresh scoring data from a different seed, same schema
    DatasetConfig dc;
    dc.rows = 30;
    dc.features = 6;
    dc.seed = 64;
    DataMatrix fresh = synthesize(dc);
    fs::path full_csv = scratch() / "fresh.csv";
    write_csv(full_csv, fresh, {"f0", "f1", "f2", "f3", "f4", "f5"}, true);
    fs::path p1_csv = scratch() / "fresh_p1.csv";
    fs::path p2_csv = scratch() / "fresh_p2.csv";
    write_csv(p1_csv, fresh, {"f0", "f2", "f4"}, true); // active party's half
    write_csv(p2_csv, fresh, {"f1", "f3", "f5"}, false);

    fs::path pred_a = scratch() / "pred_a.txt", pred_b = scratch() / "pred_b.txt";
    CmdResult ra = run_cli("predict --forest " + vrun.string() + " --data " + full_csv.string() +
                           " --label y --out " + pred_a.string());
    CHECK(ra.code == 0);
    CHECK(ra.out.find("log-loss") != std::string::npos);

    CmdResult rb = run_cli("predict --partial " + (vrun / "partial_party1.txt").string() +
                           " --data " + p1_csv.string() + " --partial " +
                           (vrun / "partial_party2.txt").string() + " --data " + p2_csv.string() +
                           " --out " + pred_b.string());
    CHECK(rb.code == 0);
    CHECK(read_text_file(pred_a.string()) == read_text_file(pred_b.string()));

    // line-by-line equality with in-process prediction
    Forest forest = parse_forest(read_text_file((vrun / "forest.txt").string()));
    DataMatrix scoring = load_csv(full_csv.string(), "y");
    std::vector<double> want = predict(forest, scoring);
    std::string expected;
    for (double p : want) expected += format_double(p) + "\n";
    CHECK(read_text_file(pred_a.string()) == expected);

    CmdResult rn = run_cli("predict --data " + full_csv.string());
    CHECK(rn.code == 3);
    CmdResult rmis = run_cli("predict --partial " + (vrun / "partial_party1.txt").string());
    CHECK(rmis.code == 3);
}
