#include "hk/cli.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace hk;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw cli::usage_error("cannot write " + path.string());
    os << content;
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

void print_table(const cli::CommandResult& r) {
    if (r.summary.contains("table"))
        for (const auto& row : r.summary["table"]) {
            const auto name = row.contains("check") ? row["check"] : row["command"];
            std::cout << "  " << row["status"].get<std::string>() << "  " << name.get<std::string>() << "\n";
        }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heat kernel estimates for fractional Laplacians with critical drift: data and verification runs"};
    std::string command, config_path, out_dir, preset;
    std::uint64_t seed = 0;
    app.add_option("command", command, "constants | fig1 | identities | kernel | bounds | simulate | verify-all")->required();
    app.add_option("--config", config_path, "JSON run configuration");
    auto* out_opt = app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "random seed (u64)");
    auto* preset_opt = app.add_option("--preset", preset, "quick or full")->check(CLI::IsMember({"quick", "full"}));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        json raw = json::object();
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw cli::usage_error("cannot read config " + config_path);
            try {
                raw = json::parse(is);
            } catch (const json::exception& e) {
                throw cli::usage_error("config " + config_path + ": " + e.what());
            }
        }
        raw["command"] = command;
        if (*out_opt) raw["out"] = out_dir;
        if (*seed_opt) raw["seed"] = seed;
        if (*preset_opt) raw["preset"] = preset;
        const auto cfg = cli::RunConfig::from_json(raw);

        const auto start = std::chrono::steady_clock::now();
        const auto result = cli::run(cfg);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const fs::path dir(cfg.out_dir);
        fs::create_directories(dir);
        for (const auto& f : result.files) write_file(dir / f.name, f.content);
        json meta = {{"command", cfg.command}, {"config_hash", cfg.hash()}, {"config", cfg.to_json()},
                     {"finished_utc", utc_now()}, {"wall_seconds", wall}, {"files", json::array()}};
        for (const auto& f : result.files) meta["files"].push_back(f.name);
        write_file(dir / (cfg.command + ".meta.json"), meta.dump(2) + "\n");

        std::cout << cfg.command << " [" << cfg.hash() << "] -> " << dir.string() << "\n";
        print_table(result);
        std::cout << (result.pass ? "PASS" : "FAIL") << "\n";
        return result.pass ? 0 : 1;
    } catch (const cli::usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 1;
    }
}
