#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"

#include <json.hpp>

#include "qvf/cli.hpp"

using namespace qvf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::vector<std::string> &args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::main_entry(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / ("qvf_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Two smooth 6x6 RGB images.
fs::path write_images(const fs::path &dir) {
    const fs::path data = dir / "images";
    fs::create_directories(data);
    for (int k = 0; k < 2; ++k) {
        Image img(6, 6, 3);
        for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 6; ++c) {
                for (int ch = 0; ch < 3; ++ch) {
                    img.at(r, c, ch) = (k == 0 ? r : c) / 5.0 * (ch + 1) / 3.0;
                }
            }
        }
        write_pnm(img, data / ("img" + std::to_string(k) + ".ppm"));
    }
    return data;
}

std::vector<std::string> tiny_model() {
    return {"--n_qubits", "3", "--depth", "1", "--hidden_dim", "8", "--hidden_layers", "1", "--latent_dim", "4",
            "--siren_omega0", "3", "--log_every", "0"};
}

std::vector<std::string> join(std::vector<std::string> a, const std::vector<std::string> &b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Outcome train_images(const fs::path &dir, const fs::path &out_dir, int epochs = 4) {
    const fs::path data = write_images(dir);
    return run_cli(join({"train", "--data", data.string(), "--out_dir", out_dir.string(), "--epochs",
                         std::to_string(epochs), "--seed", "3"},
                        tiny_model()));
}

} // namespace

TEST_CASE("config parsing: flags parse as JSON, then as strings; file values are overridden") {
    const fs::path dir = scratch("parse");
    const fs::path cfg = dir / "run.json";
    std::ofstream(cfg) << R"({"epochs": 7, "learning_rate": 0.5, "styles": ["qvf_real"], "out_dir": "x"})";
    const cli::RunConfig c = cli::parse_command_line({"variance", "--config", cfg.string(), "--epochs", "9",
                                                      "--out_dir", "plain text", "--resolution", "[4, 6]"});
    CHECK(c.task == "variance");
    CHECK(c.epochs == 9);
    CHECK(c.learning_rate == 0.5);
    CHECK(c.styles == std::vector<std::string>{"qvf_real"});
    CHECK(c.out_dir == "plain text");
    REQUIRE(c.resolution.has_value());
    CHECK((*c.resolution)[0] == 4);
    CHECK((*c.resolution)[1] == 6);
}

TEST_CASE("defaults follow the reference setup") {
    const cli::RunConfig c = cli::parse_command_line({"variance"});
    CHECK(c.learning_rate == 1e-3);
    CHECK(c.epochs == 5000);
    CHECK(c.latent_reg == 1e-3);
    CHECK(c.n_qubits == 5);
    CHECK(c.depth == 5);
    CHECK(c.hidden_dim == 128);
    CHECK(c.samples == 500);
    CHECK_FALSE(c.shots.has_value());
}

TEST_CASE("unknown keys and type errors exit 2 naming the key") {
    Outcome o = run_cli({"variance", "--epochz", "3"});
    CHECK(o.code == 2);
    CHECK(o.err.find("epochz") != std::string::npos);

    o = run_cli({"variance", "--epochs", "three"});
    CHECK(o.code == 2);
    CHECK(o.err.find("epochs") != std::string::npos);

    o = run_cli({"variance", "--seed", "-1"});
    CHECK(o.code == 2);
    CHECK(o.err.find("seed") != std::string::npos);

    o = run_cli({"frobnicate"});
    CHECK(o.code == 2);
    CHECK(run_cli({"variance", "--epochs"}).code == 2);
    CHECK(run_cli({}).code == 2);
}

TEST_CASE("missing data path exits 2 before writing anything") {
    const fs::path dir = scratch("missing");
    const fs::path out_dir = dir / "out";
    const Outcome o = run_cli({"train", "--data", (dir / "nope.ppm").string(), "--out_dir", out_dir.string()});
    CHECK(o.code == 2);
    CHECK(o.err.find("data") != std::string::npos);
    CHECK(o.out.empty());
    CHECK_FALSE(fs::exists(out_dir));
}

TEST_CASE("malformed data exits 3") {
    const fs::path dir = scratch("malformed");
    std::ofstream(dir / "bad.ppm") << "P6\n2 2\n255\nxx";
    const Outcome o = run_cli({"train", "--data", (dir / "bad.ppm").string(), "--out_dir", (dir / "o").string()});
    CHECK(o.code == 3);
}

TEST_CASE("train writes a checkpoint and one metric record per epoch; reruns are bit-identical") {
    const fs::path dir = scratch("train");
    const Outcome a = train_images(dir, dir / "a");
    REQUIRE(a.code == 0);
    const Outcome b = train_images(dir, dir / "b");
    REQUIRE(b.code == 0);

    const Checkpoint ck = load_checkpoint(dir / "a" / "checkpoint.qvf");
    CHECK(ck.latents.size() == 2);
    CHECK(ck.latents.dim() == 4);
    CHECK(ck.history.size() == 4);

    std::istringstream log(slurp(dir / "a" / "metrics.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto rec = nlohmann::json::parse(line);
        CHECK(rec["epoch"] == lines + 1);
        CHECK(rec.contains("psnr"));
        ++lines;
    }
    CHECK(lines == 4);
    CHECK(slurp(dir / "a" / "checkpoint.qvf") == slurp(dir / "b" / "checkpoint.qvf"));
    CHECK(slurp(dir / "a" / "metrics.jsonl") == slurp(dir / "b" / "metrics.jsonl"));

    const auto report = nlohmann::json::parse(slurp(dir / "a" / "train.json"));
    CHECK(report["fields"].size() == 2);
    CHECK(report.contains("mean_psnr"));
}

TEST_CASE("latent_dim defaults to 0 for one field") {
    const fs::path dir = scratch("single");
    const fs::path data = write_images(dir);
    const Outcome o = run_cli({"train", "--data", (data / "img0.ppm").string(), "--out_dir", (dir / "o").string(),
                               "--epochs", "1", "--n_qubits", "2", "--depth", "1", "--hidden_dim", "4",
                               "--output_channels", "null", "--log_every", "0", "--hidden_layers", "1"});
    REQUIRE(o.code == 2); // three channels need three qubits
    const Outcome ok = run_cli({"train", "--data", (data / "img0.ppm").string(), "--out_dir", (dir / "o").string(),
                                "--epochs", "1", "--n_qubits", "3", "--depth", "1", "--hidden_dim", "4",
                                "--log_every", "0", "--hidden_layers", "1"});
    REQUIRE(ok.code == 0);
    CHECK(load_checkpoint(dir / "o" / "checkpoint.qvf").latents.dim() == 0);
}

TEST_CASE("render, eval, shots, noise, inpaint and interpolate run on a trained collection") {
    const fs::path dir = scratch("apps");
    REQUIRE(train_images(dir, dir / "m", 2).code == 0);
    const std::string ck = (dir / "m" / "checkpoint.qvf").string();
    const std::string data = (dir / "images").string();

    Outcome o = run_cli({"render", "--checkpoint", ck, "--out_dir", (dir / "r").string(), "--resolution", "12"});
    REQUIRE(o.code == 0);
    const Image big = read_pnm(dir / "r" / "render.ppm");
    CHECK(big.height == 12);
    CHECK(big.width == 12);

    CHECK(run_cli({"render", "--checkpoint", ck, "--out_dir", (dir / "r").string(), "--shots", "0"}).code == 2);
    CHECK(run_cli({"render", "--checkpoint", ck, "--out_dir", (dir / "r").string(), "--field", "5"}).code == 2);
    CHECK(run_cli({"render", "--checkpoint", ck, "--out_dir", (dir / "r").string(), "--shots", "50", "--noise_sigma",
                   "0.1"})
              .code == 0);

    o = run_cli({"eval", "--checkpoint", ck, "--data", data, "--out_dir", (dir / "e").string()});
    REQUIRE(o.code == 0);
    CHECK(nlohmann::json::parse(o.out)["fields"].size() == 2);

    o = run_cli({"shots", "--checkpoint", ck, "--data", data, "--out_dir", (dir / "s").string(), "--shots_list",
                 "[10, 100]", "--repeats", "3"});
    REQUIRE(o.code == 0);
    auto rep = nlohmann::json::parse(o.out);
    CHECK(rep["points"].size() == 2);
    CHECK(rep["points"][0]["psnr"].size() == 3);

    o = run_cli({"noise", "--checkpoint", ck, "--data", data, "--out_dir", (dir / "n").string(), "--repeats", "1"});
    REQUIRE(o.code == 0);
    CHECK(nlohmann::json::parse(o.out)["points"].size() == 3);

    o = run_cli({"inpaint", "--checkpoint", ck, "--data", data, "--out_dir", (dir / "i").string(), "--map_steps",
                 "5"});
    REQUIRE(o.code == 0);
    rep = nlohmann::json::parse(o.out);
    CHECK(rep["fields"][0]["held_out"] == 18);
    CHECK(fs::exists(dir / "i" / "inpaint_1.ppm"));

    CHECK(run_cli({"complete", "--checkpoint", ck, "--data", data, "--out_dir", (dir / "c").string()}).code == 2);

    o = run_cli({"interpolate", "--checkpoint", ck, "--out_dir", (dir / "t").string(), "--steps", "2"});
    REQUIRE(o.code == 0);
    REQUIRE(run_cli({"render", "--checkpoint", ck, "--out_dir", (dir / "f1").string(), "--field", "1"}).code == 0);
    REQUIRE(run_cli({"render", "--checkpoint", ck, "--out_dir", (dir / "f0").string()}).code == 0);
    CHECK(slurp(dir / "t" / "interp_0.ppm") == slurp(dir / "f0" / "render.ppm"));
    CHECK(slurp(dir / "t" / "interp_1.ppm") == slurp(dir / "f1" / "render.ppm"));
}

TEST_CASE("shape collection: train, mesh render and completion over noise ratios") {
    const fs::path dir = scratch("shapes");
    const std::vector<std::string> shapes = {"--shapes", R"(["sphere", "torus"])", "--samples_per_shape", "300"};
    Outcome o = run_cli(join(join({"train", "--out_dir", (dir / "m").string(), "--epochs", "2"}, shapes),
                             tiny_model()));
    REQUIRE(o.code == 0);
    CHECK(nlohmann::json::parse(o.out).contains("mean_mae"));
    const std::string ck = (dir / "m" / "checkpoint.qvf").string();

    o = run_cli({"render", "--checkpoint", ck, "--out_dir", (dir / "r").string(), "--resolution", "8", "--iso",
                 "0.5"});
    REQUIRE(o.code == 0);
    CHECK(fs::exists(dir / "r" / "render.obj"));

    o = run_cli(join({"complete", "--checkpoint", ck, "--out_dir", (dir / "c").string(), "--resolution", "6",
                      "--map_steps", "3", "--noise_ratios", "[0, 0.01]", "--max_observations", "50"},
                     shapes));
    REQUIRE(o.code == 0);
    const auto rep = nlohmann::json::parse(o.out);
    CHECK(rep["fields"].size() == 2);
    CHECK(rep["fields"][0]["results"].size() == 2);
    CHECK(fs::exists(dir / "c" / "complete_1_1.obj"));

    CHECK(run_cli({"shots", "--checkpoint", ck, "--out_dir", (dir / "s").string(), "--shapes", R"(["sphere"])"})
              .code == 2);
}

TEST_CASE("variance report lists both styles for every n") {
    const fs::path dir = scratch("variance");
    const Outcome o = run_cli(
        {"variance", "--out_dir", dir.string(), "--n_list", "[2, 3]", "--samples", "20", "--depth", "2"});
    REQUIRE(o.code == 0);
    const auto rep = nlohmann::json::parse(o.out);
    CHECK(rep["rows"].size() == 4);
    std::set<std::pair<int, std::string>> seen;
    for (const auto &row : rep["rows"]) {
        seen.insert({row["n_qubits"].get<int>(), row["style"].get<std::string>()});
    }
    CHECK(seen.size() == 4);
    std::istringstream csv(slurp(dir / "variance.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) {
        ++lines;
    }
    CHECK(lines == 5);
}

TEST_CASE("corrupt checkpoint exits 3") {
    const fs::path dir = scratch("corrupt");
    std::ofstream(dir / "bad.qvf") << "not a checkpoint";
    const Outcome o = run_cli({"render", "--checkpoint", (dir / "bad.qvf").string(), "--out_dir", dir.string()});
    CHECK(o.code == 3);
}
