#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "tokenbudget/types.hpp"

namespace tokenbudget {

inline constexpr std::string_view kLogSchema = "ttlog/1";

/// Raised when a log or dataset line cannot be parsed. Carries the 1-based line number.
class LogFormatError : public std::runtime_error {
public:
    LogFormatError(std::string path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
          path_(std::move(path)), line_(line) {}

    std::size_t line() const { return line_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::size_t line_;
};

class SchemaMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DuplicateRecordError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct LogHeader {
    std::string schema{kLogSchema};
    std::string dataset;
    std::string created_at;
    std::string config_digest;
    std::vector<std::string> non_replayable;  // models whose endpoint ignores seeds

    bool operator==(const LogHeader&) const = default;
};

using RecordKey = std::tuple<std::string, std::string, std::string, std::int64_t>;

inline RecordKey key_of(const SampleRecord& r) {
    return {r.question_id, r.model_id, to_string(r.strategy), r.sample_index};
}

inline std::string describe(const RecordKey& k) {
    return "(" + std::get<0>(k) + ", " + std::get<1>(k) + ", " + std::get<2>(k) + ", " +
           std::to_string(std::get<3>(k)) + ")";
}

/// Append-only collection of graded samples. Keys
/// (question_id, model_id, strategy, sample_index) are unique.
class RunLog {
public:
    RunLog() = default;
    explicit RunLog(LogHeader header) : header_(std::move(header)) {}

    const LogHeader& header() const { return header_; }
    LogHeader& header() { return header_; }
    const std::vector<SampleRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    bool contains(const RecordKey& k) const { return keys_.contains(k); }

    void append(SampleRecord rec) {
        validate(rec);
        auto k = key_of(rec);
        if (keys_.contains(k)) throw DuplicateRecordError("duplicate record key " + describe(k));
        keys_.insert(std::move(k));
        records_.push_back(std::move(rec));
    }

    bool operator==(const RunLog& o) const { return header_ == o.header_ && records_ == o.records_; }

private:
    LogHeader header_;
    std::vector<SampleRecord> records_;
    std::set<RecordKey> keys_;
};

inline RunLog append_record(RunLog log, SampleRecord rec) {
    log.append(std::move(rec));
    return log;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

using ojson = nlohmann::ordered_json;

inline std::string dump_line(const ojson& j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline ojson to_json(const LogHeader& h) {
    ojson j;
    j["type"] = "header";
    j["schema"] = h.schema;
    j["dataset"] = h.dataset;
    j["created_at"] = h.created_at;
    j["config_digest"] = h.config_digest;
    j["non_replayable"] = h.non_replayable;
    return j;
}

inline ojson to_json(const Telemetry& t) {
    ojson j = ojson::object();
    if (t.temperature) j["temperature"] = *t.temperature;
    if (t.unparsed) j["unparsed"] = true;
    if (t.truncated) j["truncated"] = true;
    if (t.estimated_tokens) j["estimated_tokens"] = true;
    if (!t.judge_input.empty()) j["judge_input"] = t.judge_input;
    if (!t.verdicts.empty()) {
        ojson arr = ojson::array();
        for (const auto& v : t.verdicts)
            arr.push_back({{"requirement", v.requirement}, {"yes", v.yes}, {"flagged", v.flagged}});
        j["verdicts"] = std::move(arr);
    }
    return j;
}

inline ojson to_json(const SampleRecord& r) {
    ojson j;
    j["question_id"] = r.question_id;
    j["model_id"] = r.model_id;
    j["strategy"] = to_string(r.strategy);
    j["sample_index"] = r.sample_index;
    j["seed"] = r.seed;
    j["answer_text"] = r.answer_text;
    j["spend"] = r.spend;
    j["correct"] = r.correct ? ojson(*r.correct) : ojson(nullptr);
    j["interrupts"] = r.interrupts;
    j["forced"] = r.forced;
    j["deadline"] = r.deadline ? ojson(*r.deadline) : ojson(nullptr);
    if (!r.telemetry.empty()) j["telemetry"] = to_json(r.telemetry);
    return j;
}

template <class J>
const J& require(const J& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + field + "'");
    return *it;
}

inline LogHeader header_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("type", "") != "header")
        throw std::invalid_argument("first line is not a log header");
    LogHeader h;
    h.schema = require(j, "schema").get<std::string>();
    if (h.schema != kLogSchema)
        throw SchemaMismatchError("run log schema '" + h.schema + "' is not supported (expected '" +
                                  std::string(kLogSchema) + "')");
    h.dataset = require(j, "dataset").get<std::string>();
    h.created_at = j.value("created_at", "");
    h.config_digest = j.value("config_digest", "");
    if (auto it = j.find("non_replayable"); it != j.end())
        h.non_replayable = it->get<std::vector<std::string>>();
    return h;
}

inline Telemetry telemetry_from_json(const nlohmann::json& j) {
    Telemetry t;
    if (auto it = j.find("temperature"); it != j.end()) t.temperature = it->get<double>();
    t.unparsed = j.value("unparsed", false);
    t.truncated = j.value("truncated", false);
    t.estimated_tokens = j.value("estimated_tokens", false);
    t.judge_input = j.value("judge_input", "");
    if (auto it = j.find("verdicts"); it != j.end())
        for (const auto& v : *it)
            t.verdicts.push_back({require(v, "requirement").get<std::string>(),
                                  require(v, "yes").get<bool>(), v.value("flagged", false)});
    return t;
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
    SampleRecord r;
    r.question_id = require(j, "question_id").get<std::string>();
    r.model_id = require(j, "model_id").get<std::string>();
    r.strategy = parse_strategy(require(j, "strategy").get<std::string>());
    r.sample_index = require(j, "sample_index").get<std::int64_t>();
    r.seed = require(j, "seed").get<std::uint64_t>();
    r.answer_text = require(j, "answer_text").get<std::string>();
    r.spend = require(j, "spend").get<Tokens>();
    if (const auto& c = require(j, "correct"); !c.is_null()) r.correct = c.get<double>();
    r.interrupts = require(j, "interrupts").get<std::int64_t>();
    r.forced = require(j, "forced").get<bool>();
    if (const auto& d = require(j, "deadline"); !d.is_null()) r.deadline = d.get<Tokens>();
    if (auto it = j.find("telemetry"); it != j.end()) r.telemetry = telemetry_from_json(*it);
    validate(r);
    return r;
}

inline ojson to_json(const Question& q) {
    ojson j;
    j["id"] = q.id;
    j["prompt"] = q.prompt;
    j["gold"] = q.gold ? ojson(*q.gold) : ojson(nullptr);
    j["grading"] = std::string(to_string(q.grading));
    j["dataset"] = q.dataset;
    j["requirements"] = q.requirements;
    return j;
}

inline Question question_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("question is not a JSON object");
    Question q;
    q.id = require(j, "id").get<std::string>();
    q.prompt = require(j, "prompt").get<std::string>();
    if (auto it = j.find("gold"); it != j.end() && !it->is_null()) q.gold = it->get<std::string>();
    q.grading = parse_grading(j.value("grading", "none"));
    q.dataset = j.value("dataset", "");
    if (auto it = j.find("requirements"); it != j.end())
        q.requirements = it->get<std::vector<std::string>>();
    validate(q);
    return q;
}

/// Reads a file as lines, remembering whether the last line ended with '\n'.
struct Lines {
    std::vector<std::string> lines;
    bool final_newline = true;
};

inline Lines read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    Lines out;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string::npos) {
            out.lines.push_back(text.substr(start));
            out.final_newline = false;
            break;
        }
        out.lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

}  // namespace detail

inline std::string serialize_header(const LogHeader& h) { return detail::dump_line(detail::to_json(h)); }
inline std::string serialize_record(const SampleRecord& r) { return detail::dump_line(detail::to_json(r)); }

inline std::string serialize_log(const RunLog& log) {
    std::string out = serialize_header(log.header()) + "\n";
    for (const auto& r : log.records()) out += serialize_record(r) + "\n";
    return out;
}

inline void save_log(const RunLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_log(log);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline RunLog load_log(const std::filesystem::path& path) {
    const auto file = detail::read_lines(path);
    const std::string name = path.string();
    if (file.lines.empty()) throw LogFormatError(name, 1, "empty run log (missing header)");

    auto parse = [&](std::size_t i) {
        try {
            return nlohmann::json::parse(file.lines[i]);
        } catch (const nlohmann::json::exception& e) {
            throw LogFormatError(name, i + 1, std::string("malformed JSON: ") + e.what());
        }
    };

    RunLog log;
    try {
        log = RunLog(detail::header_from_json(parse(0)));
    } catch (const SchemaMismatchError&) {
        throw;
    } catch (const LogFormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw LogFormatError(name, 1, e.what());
    }
    for (std::size_t i = 1; i < file.lines.size(); ++i) {
        if (file.lines[i].empty() && i + 1 == file.lines.size()) break;
        const bool last = i + 1 == file.lines.size();
        if (last && !file.final_newline)
            throw LogFormatError(name, i + 1, "truncated final line (no terminating newline)");
        const auto j = parse(i);
        try {
            log.append(detail::record_from_json(j));
        } catch (const std::exception& e) {
            throw LogFormatError(name, i + 1, e.what());
        }
    }
    return log;
}

/// Single-writer incremental log persistence. Each append is one line,
/// flushed before returning, so an interrupted run leaves exactly the
/// completed samples on disk. Thread-safe; callers may append from workers.
class LogWriter {
public:
    LogWriter(std::filesystem::path path, LogHeader header)
        : path_(std::move(path)), log_(std::move(header)) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        out_.open(path_, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write " + path_.string());
        out_ << serialize_header(log_.header()) << '\n';
        out_.flush();
    }

    void append(const SampleRecord& rec) {
        std::lock_guard lock(mu_);
        log_.append(rec);
        out_ << serialize_record(rec) << '\n';
        out_.flush();
        if (!out_) throw std::runtime_error("write failed for " + path_.string());
    }

    /// Rewrites the file with records in the given canonical order
    /// (atomically, via rename) and returns the final log.
    template <class Less>
    RunLog finalize(Less less) {
        std::lock_guard lock(mu_);
        out_.close();
        std::vector<SampleRecord> recs = log_.records();
        std::stable_sort(recs.begin(), recs.end(), less);
        RunLog sorted(log_.header());
        for (auto& r : recs) sorted.append(std::move(r));
        const auto tmp = path_.string() + ".tmp";
        save_log(sorted, tmp);
        std::filesystem::rename(tmp, path_);
        log_ = sorted;
        return sorted;
    }

    RunLog snapshot() const {
        std::lock_guard lock(mu_);
        return log_;
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    RunLog log_;
    mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Dataset files: one Question per line.

inline std::vector<Question> load_questions(const std::filesystem::path& path) {
    const auto file = detail::read_lines(path);
    const std::string name = path.string();
    std::vector<Question> out;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < file.lines.size(); ++i) {
        if (file.lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto q = detail::question_from_json(nlohmann::json::parse(file.lines[i]));
            if (!ids.insert(q.id).second) throw std::invalid_argument("duplicate question id '" + q.id + "'");
            out.push_back(std::move(q));
        } catch (const std::exception& e) {
            throw LogFormatError(name, i + 1, e.what());
        }
    }
    return out;
}

inline void save_questions(const std::vector<Question>& questions, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& q : questions) out << detail::dump_line(detail::to_json(q)) << '\n';
}

}  // namespace tokenbudget
