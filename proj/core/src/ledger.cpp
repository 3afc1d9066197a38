#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "maescale/error.hpp"
#include "maescale/harness.hpp"
#include <json.hpp>

namespace maescale {

using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t x) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 16);
    if (used != s.size()) throw std::invalid_argument("bad hex");
    return v;
}

LedgerHeader header_from_json(const ordered_json& j) {
    if (j.at("type").get<std::string>() != "header") throw IoError("ledger header missing");
    return {parse_hex64(j.at("corpus_fingerprint").get<std::string>()),
            parse_hex64(j.at("config_hash").get<std::string>()),
            j.at("tool_version").get<std::string>()};
}

ExperimentResult result_from_json(const ordered_json& j) {
    if (j.at("type").get<std::string>() != "result") throw IoError("not a result line");
    ExperimentResult r;
    const auto& c = j.at("cell");
    r.cell.fraction = c.at("fraction").get<double>();
    r.cell.repeat_index = c.at("repeat_index").get<int>();
    r.cell.resolution = c.at("resolution").get<int>();
    r.cell.model_name = c.at("model").get<std::string>();
    r.cell.protocol = EvalProtocol::parse(c.at("protocol").get<std::string>());
    const auto& s = c.at("seeds");
    r.cell.seeds = {s.at("subset").get<std::uint64_t>(), s.at("init").get<std::uint64_t>(),
                    s.at("train").get<std::uint64_t>(), s.at("eval").get<std::uint64_t>()};
    r.i_thousands = j.at("i_thousands").get<double>();
    if (!j.at("accuracy_pct").is_null()) r.accuracy_pct = j.at("accuracy_pct").get<double>();
    const auto& loss = j.at("final_train_loss");
    r.final_train_loss = loss.is_null() ? std::nan("") : loss.get<double>();
    r.n_eval = j.at("n_eval").get<std::size_t>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.status = j.at("status").get<std::string>();
    return r;
}

struct LoadedLedger {
    RunLedger ledger;
    bool dropped_tail = false;
};

LoadedLedger load_ledger_impl(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw IoError("ledger " + path.string() + " is empty");

    LoadedLedger out;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        try {
            const auto j = ordered_json::parse(lines[k]);
            if (k == 0) {
                out.ledger.header = header_from_json(j);
            } else {
                out.ledger.results.push_back(result_from_json(j));
            }
        } catch (const std::exception& e) {
            if (k + 1 == lines.size() && k > 0) {
                out.dropped_tail = true;
                break;
            }
            throw IoError("malformed ledger line " + std::to_string(k + 1) + " in " +
                          path.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::string ledger_header_line(const LedgerHeader& header) {
    ordered_json j;
    j["type"] = "header";
    j["corpus_fingerprint"] = hex64(header.corpus_fingerprint);
    j["config_hash"] = hex64(header.config_hash);
    j["tool_version"] = header.tool_version;
    return j.dump();
}

std::string ledger_result_line(const ExperimentResult& r) {
    ordered_json j;
    j["type"] = "result";
    j["cell"] = {{"fraction", r.cell.fraction},
                 {"repeat_index", r.cell.repeat_index},
                 {"resolution", r.cell.resolution},
                 {"model", r.cell.model_name},
                 {"protocol", r.cell.protocol.name()},
                 {"seeds",
                  {{"subset", r.cell.seeds.subset},
                   {"init", r.cell.seeds.init},
                   {"train", r.cell.seeds.train},
                   {"eval", r.cell.seeds.eval}}}};
    j["i_thousands"] = r.i_thousands;
    j["accuracy_pct"] = r.accuracy_pct ? ordered_json(*r.accuracy_pct) : ordered_json(nullptr);
    j["final_train_loss"] = r.final_train_loss;  // NaN serializes as null
    j["n_eval"] = r.n_eval;
    j["wall_seconds"] = r.wall_seconds;
    j["status"] = r.status;
    return j.dump();
}

RunLedger load_ledger(const std::filesystem::path& path) { return load_ledger_impl(path).ledger; }

RunGridSummary run_grid(std::span<const ExperimentCell> cells, const CorpusSet& corpora,
                        const ExperimentConfig& config, const std::filesystem::path& ledger_path,
                        const RunGridOptions& options) {
    config.validate();
    if (options.workers < 1) throw ConfigError("workers must be at least 1");
    const LedgerHeader header{corpora.fingerprint(), config.hash(), tool_version()};

    RunGridSummary summary;
    std::error_code ec;
    if (std::filesystem::exists(ledger_path, ec) && std::filesystem::file_size(ledger_path, ec) > 0) {
        auto loaded = load_ledger_impl(ledger_path);
        if (loaded.ledger.header.corpus_fingerprint != header.corpus_fingerprint) {
            throw ConfigError("ledger " + ledger_path.string() +
                              " was written for a different corpus; refusing to resume");
        }
        if (loaded.ledger.header.config_hash != header.config_hash) {
            throw ConfigError("ledger " + ledger_path.string() +
                              " was written for a different config; refusing to resume");
        }
        summary.ledger = std::move(loaded.ledger);
        if (loaded.dropped_tail) {
            std::string text = ledger_header_line(summary.ledger.header) + '\n';
            for (const auto& r : summary.ledger.results) text += ledger_result_line(r) + '\n';
            write_text_file(ledger_path, text);
        }
    } else {
        summary.ledger.header = header;
        write_text_file(ledger_path, ledger_header_line(header) + '\n');
    }

    std::set<std::string> done;
    for (const auto& r : summary.ledger.results) done.insert(r.cell.key());
    std::vector<const ExperimentCell*> pending;
    for (const auto& c : cells) {
        if (done.count(c.key())) {
            ++summary.skipped;
        } else {
            pending.push_back(&c);
        }
    }
    if (options.stop_after && pending.size() > *options.stop_after) {
        pending.resize(*options.stop_after);
    }
    if (pending.empty()) return summary;

    std::ofstream out(ledger_path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to ledger " + ledger_path.string());

    const std::size_t n = pending.size();
    std::vector<std::optional<ExperimentResult>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::condition_variable ready;

    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= n) return;
            std::optional<ExperimentResult> r;
            std::exception_ptr err;
            try {
                r = run_cell(*pending[k], corpora, config);
            } catch (...) {
                err = std::current_exception();
            }
            {
                std::lock_guard lock(mutex);
                slots[k] = std::move(r);
                errors[k] = err;
            }
            ready.notify_all();
        }
    };

    const auto thread_count = std::min<std::size_t>(static_cast<std::size_t>(options.workers), n);
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    auto join_all = [&] {
        for (auto& t : threads) {
            if (t.joinable()) t.join();
        }
    };

    // Single appender: results go to disk strictly in grid order.
    for (std::size_t k = 0; k < n; ++k) {
        std::unique_lock lock(mutex);
        ready.wait(lock, [&] { return slots[k].has_value() || errors[k]; });
        if (errors[k]) {
            next.store(n);
            lock.unlock();
            join_all();
            std::rethrow_exception(errors[k]);
        }
        ExperimentResult r = std::move(*slots[k]);
        slots[k].reset();
        lock.unlock();
        out << ledger_result_line(r) << '\n';
        out.flush();
        if (!out) {
            next.store(n);
            join_all();
            throw IoError("write to ledger " + ledger_path.string() + " failed");
        }
        ++summary.executed;
        if (options.on_result) options.on_result(r);
        summary.ledger.results.push_back(std::move(r));
    }
    join_all();
    return summary;
}

}  // namespace maescale
