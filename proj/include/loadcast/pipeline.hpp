#ifndef LOADCAST_PIPELINE_HPP
#define LOADCAST_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/autoencoder.hpp"
#include "loadcast/forecaster.hpp"
#include "loadcast/granger.hpp"
#include "loadcast/ingest.hpp"
#include "loadcast/metrics.hpp"
#include "loadcast/text_features.hpp"
#include "loadcast/timeseries.hpp"
#include "loadcast/version.hpp"

namespace loadcast {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration: flat key=value file, '#' comments, no nesting
// ---------------------------------------------------------------------------

struct RunConfig {
    std::map<std::string, std::string> raw; // resolved settings, for the manifest

    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string data_dir = ".";
    std::string frame_csv;       // defaults to <out_dir>/frame.csv
    std::string checkpoint_json; // defaults to <out_dir>/checkpoint.json

    std::optional<Date> start_date;
    std::optional<Date> end_date;
    std::optional<Date> split_date;

    std::vector<std::string> groups; // subset of {W,S,T,G,CG}

    int granger_max_lag = 7;
    double granger_alpha = 0.05;
    bool granger_bonferroni = false;
    bool granger_select = true;

    AeTrainConfig ae;
    TrainConfig train;
    double interval_alpha = 0.2;

    bool synthetic = false;
    SyntheticSpec synth;

    std::string corpus_jsonl;
    std::string lexicon_csv;
    std::vector<std::string> keywords;
    std::size_t embedding_dim = kDefaultEmbeddingDim;
};

namespace pipeline_detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("config key " + key + " expects true/false, got '" + v + "'");
}

} // namespace pipeline_detail

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys{
        "seed", "out_dir", "data_dir", "frame_csv", "checkpoint_json",
        "start_date", "end_date", "split_date", "groups",
        "granger_max_lag", "granger_alpha", "granger_bonferroni", "granger_select",
        "ae_plan", "ae_kernel", "ae_lr", "ae_patience", "ae_max_epochs",
        "mode", "hidden", "batch", "lr", "patience", "max_epochs", "quantiles",
        "interval_alpha",
        "synthetic", "synth_days", "synth_weekly_amplitude", "synth_annual_amplitude",
        "synth_temp_coupling", "synth_text_lag", "synth_text_gain", "synth_noise_sd",
        "synth_noise_channels", "synth_text_ar", "synth_embeddings", "synth_embedding_dim",
        "synth_start_date",
        "corpus_jsonl", "lexicon_csv", "keywords", "embedding_dim",
    };
    return keys;
}

inline RunConfig config_from_map(std::map<std::string, std::string> kv) {
    using pipeline_detail::parse_bool;
    using pipeline_detail::split_list;

    for (const auto& [key, value] : kv) {
        (void)value;
        if (!known_config_keys().count(key)) throw UsageError("unknown config key: " + key);
    }
    if (!kv.count("seed")) throw UsageError("config must set seed (no implicit randomness)");

    RunConfig cfg;
    auto get = [&](const char* key, const std::string& fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };
    auto get_double = [&](const char* key, double fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : parse_double(it->second, std::string("for ") + key);
    };
    auto get_int = [&](const char* key, long fallback) {
        return static_cast<long>(get_double(key, static_cast<double>(fallback)));
    };

    cfg.seed = static_cast<std::uint64_t>(get_int("seed", 0));
    cfg.out_dir = get("out_dir", "out");
    cfg.data_dir = get("data_dir", ".");
    cfg.frame_csv = get("frame_csv", "");
    cfg.checkpoint_json = get("checkpoint_json", "");
    if (kv.count("start_date")) cfg.start_date = parse_date(kv["start_date"]);
    if (kv.count("end_date")) cfg.end_date = parse_date(kv["end_date"]);
    if (kv.count("split_date")) cfg.split_date = parse_date(kv["split_date"]);

    cfg.groups = split_list(get("groups", ""));
    for (const auto& g : cfg.groups) {
        if (g != "W" && g != "S" && g != "T" && g != "G" && g != "CG") {
            throw UsageError("unknown feature group '" + g + "' (expected W,S,T,G,CG)");
        }
    }

    cfg.granger_max_lag = static_cast<int>(get_int("granger_max_lag", 7));
    cfg.granger_alpha = get_double("granger_alpha", 0.05);
    cfg.granger_bonferroni = parse_bool(get("granger_bonferroni", "false"), "granger_bonferroni");
    cfg.granger_select = parse_bool(get("granger_select", "true"), "granger_select");

    cfg.ae.channel_plan.clear();
    for (const auto& tok : split_list(get("ae_plan", "100,16,1"))) {
        cfg.ae.channel_plan.push_back(
            static_cast<std::size_t>(parse_double(tok, "for ae_plan")));
    }
    cfg.ae.kernel_width = static_cast<std::size_t>(get_int("ae_kernel", 3));
    cfg.ae.lr = get_double("ae_lr", 5e-3);
    cfg.ae.patience = static_cast<int>(get_int("ae_patience", 200));
    cfg.ae.max_epochs = static_cast<int>(get_int("ae_max_epochs", 2000));
    cfg.ae.seed = cfg.seed;

    const std::string mode = get("mode", "point");
    if (mode != "point" && mode != "quantile") {
        throw UsageError("mode must be point or quantile, got '" + mode + "'");
    }
    cfg.train.mode = mode == "quantile" ? TrainMode::quantile : TrainMode::point;
    cfg.train.hidden_dim = static_cast<std::size_t>(get_int("hidden", kDefaultHidden));
    cfg.train.batch = static_cast<std::size_t>(get_int("batch", 4));
    cfg.train.lr = get_double("lr", 1e-4);
    cfg.train.patience = static_cast<int>(get_int("patience", 10));
    cfg.train.max_epochs = static_cast<int>(get_int("max_epochs", 500));
    cfg.train.seed = cfg.seed;
    cfg.train.quantiles.clear();
    for (const auto& tok : split_list(get("quantiles", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"))) {
        cfg.train.quantiles.push_back(parse_double(tok, "for quantiles"));
    }
    cfg.interval_alpha = get_double("interval_alpha", 0.2);

    cfg.synthetic = parse_bool(get("synthetic", "false"), "synthetic");
    cfg.synth.n_days = static_cast<std::size_t>(get_int("synth_days", 100));
    cfg.synth.weekly_amplitude = get_double("synth_weekly_amplitude", 0.08);
    cfg.synth.annual_amplitude = get_double("synth_annual_amplitude", 0.15);
    cfg.synth.temperature_coupling = get_double("synth_temp_coupling", 0.0);
    cfg.synth.text_signal_lag = static_cast<int>(get_int("synth_text_lag", 1));
    cfg.synth.text_signal_gain = get_double("synth_text_gain", 0.0);
    cfg.synth.noise_sd = get_double("synth_noise_sd", 0.0);
    cfg.synth.n_noise_text = static_cast<int>(get_int("synth_noise_channels", 0));
    cfg.synth.text_ar = get_double("synth_text_ar", 0.0);
    cfg.synth.with_embeddings = parse_bool(get("synth_embeddings", "false"), "synth_embeddings");
    cfg.synth.embedding_dim = static_cast<std::size_t>(get_int("synth_embedding_dim", 100));
    cfg.synth.start_date = parse_date(get("synth_start_date", "2016-06-01"));
    cfg.synth.seed = cfg.seed;

    cfg.corpus_jsonl = get("corpus_jsonl", "");
    cfg.lexicon_csv = get("lexicon_csv", "");
    cfg.keywords = split_list(get("keywords", ""));
    cfg.embedding_dim = static_cast<std::size_t>(get_int("embedding_dim", 100));

    // resolved settings for the manifest: defaults materialized
    cfg.raw = std::move(kv);
    cfg.raw["out_dir"] = cfg.out_dir;
    cfg.raw["data_dir"] = cfg.data_dir;
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path + ":" + std::to_string(line_no) +
                             ": expected key=value, got '" + line + "'");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        if (kv.count(key)) throw UsageError(path + ": duplicate key " + key);
        kv[key] = value;
    }
    return config_from_map(std::move(kv));
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline std::string resolved_frame_path(const RunConfig& cfg) {
    return cfg.frame_csv.empty() ? cfg.out_dir + "/frame.csv" : cfg.frame_csv;
}

inline std::string resolved_checkpoint_path(const RunConfig& cfg) {
    return cfg.checkpoint_json.empty() ? cfg.out_dir + "/checkpoint.json" : cfg.checkpoint_json;
}

inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           const std::string& dir,
                           const std::map<std::string, std::string>& extra = {}) {
    nlohmann::json j;
    j["command"] = command;
    j["tool_version"] = kVersion;
    j["config"] = cfg.raw;
    for (const auto& [k, v] : extra) j["outputs"][k] = v;
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw DataError("cannot write manifest in " + dir);
    out << j.dump(2) << '\n';
}

inline Date require_split(const RunConfig& cfg) {
    if (!cfg.split_date) throw UsageError("this command needs split_date in the config");
    return *cfg.split_date;
}

// letter -> on-disk text group
inline std::string group_of_letter(const std::string& letter) {
    if (letter == "W") return "wordfreq";
    if (letter == "S") return "sentiment";
    if (letter == "T") return "topic";
    if (letter == "G") return "embedding";
    if (letter == "CG") return "cg";
    throw UsageError("unknown feature group letter: " + letter);
}

// ---------------------------------------------------------------------------
// Featurization for modeling
// ---------------------------------------------------------------------------

// Everything evaluate/predict needs to rebuild the training-time channels
// from a raw frame: the surviving channel list, the Granger screen, and the
// embedded compression model with its z-score statistics.
struct FeatureArtifacts {
    std::vector<std::string> variant_groups;
    std::vector<std::string> channels;
    std::vector<GrangerResult> granger;
    bool has_cg = false;
    AutoencoderModel ae;
    double cg_mean = 0.0;
    double cg_sd = 1.0;
};

inline constexpr const char* kCgColumnName = "text_cg_c1";

namespace pipeline_detail {

inline std::size_t training_days(const SeriesFrame& frame, Date split) {
    std::size_t n = 0;
    while (n < frame.n_days() && frame.day_at(n) < split) ++n;
    return n;
}

// days x dims matrix of the embedding columns (daily values)
inline Matrix embedding_matrix(const SeriesFrame& frame, std::vector<std::string>* names) {
    std::vector<const Column*> cols;
    for (const auto& c : frame.columns()) {
        if (text_group_of(c.role) == "embedding") cols.push_back(&c);
    }
    if (cols.empty()) {
        throw MissingTargetTable("CG requested but the frame has no embedding columns "
                                 "(group G source table missing)");
    }
    Matrix m(frame.n_days(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (names) names->push_back(cols[j]->name);
        for (std::size_t d = 0; d < frame.n_days(); ++d) {
            m(d, j) = cols[j]->values[d * kSlotsPerDay];
        }
    }
    return m;
}

inline Column make_cg_column(const SeriesFrame& frame, const AutoencoderModel& ae,
                             double cg_mean, double cg_sd) {
    const Matrix emb = embedding_matrix(frame, nullptr);
    const Matrix z = encode(ae, emb);
    Column col;
    col.name = kCgColumnName;
    col.role = text_role("cg");
    col.values.resize(frame.n_rows());
    for (std::size_t d = 0; d < frame.n_days(); ++d) {
        const double v = (z(d, 0) - cg_mean) / cg_sd;
        for (int k = 0; k < kSlotsPerDay; ++k) col.values[d * kSlotsPerDay + k] = v;
    }
    return col;
}

} // namespace pipeline_detail

// Assemble the modeling frame for one variant: base channels always, enabled
// text groups Granger-screened against training-day demand, and the
// compressed embedding channel when CG is enabled. Artifacts capture what is
// needed to replay the same channels on new data.
inline SeriesFrame build_feature_frame(const SeriesFrame& frame, const RunConfig& cfg,
                                       const std::vector<std::string>& groups,
                                       FeatureArtifacts& art) {
    const Date split = require_split(cfg);
    const std::size_t n_train_days = pipeline_detail::training_days(frame, split);
    art.variant_groups = groups;

    std::set<std::string> enabled_text_groups;
    bool want_cg = false;
    for (const auto& letter : groups) {
        if (letter == "CG") {
            want_cg = true;
        } else {
            enabled_text_groups.insert(group_of_letter(letter));
        }
    }

    SeriesFrame out(frame.timestamps());
    std::vector<NamedSeries> candidates;
    for (const auto& c : frame.columns()) {
        if (!is_text_role(c.role)) {
            out.add_column(c);
            continue;
        }
        if (!enabled_text_groups.count(text_group_of(c.role))) continue;
        NamedSeries s;
        s.name = c.name;
        s.values.resize(n_train_days);
        for (std::size_t d = 0; d < n_train_days; ++d) s.values[d] = c.values[d * kSlotsPerDay];
        candidates.push_back(std::move(s));
    }

    if (!candidates.empty()) {
        std::vector<double> y_daily = frame.daily_target_means();
        y_daily.resize(n_train_days);
        if (cfg.granger_select) {
            art.granger = granger_screen(candidates, y_daily, cfg.granger_max_lag,
                                         cfg.granger_alpha, cfg.granger_bonferroni);
            for (const auto& r : art.granger) {
                if (r.selected) out.add_column(frame.column(r.feature_name));
            }
        } else {
            for (const auto& s : candidates) out.add_column(frame.column(s.name));
        }
    }

    if (want_cg) {
        std::vector<std::string> emb_names;
        const Matrix emb = pipeline_detail::embedding_matrix(frame, &emb_names);
        if (n_train_days < 20) throw TooFewWindows("CG needs >= 20 training days");
        Matrix train_emb(n_train_days, emb.cols);
        for (std::size_t d = 0; d < n_train_days; ++d)
            for (std::size_t j = 0; j < emb.cols; ++j) train_emb(d, j) = emb(d, j);

        AeTrainConfig ae_cfg = cfg.ae;
        if (ae_cfg.channel_plan.front() != emb.cols) {
            throw ShapeMismatch("ae_plan starts at " + std::to_string(ae_cfg.channel_plan.front()) +
                                " but the embedding table has " + std::to_string(emb.cols) +
                                " dims");
        }
        art.ae = train_autoencoder(train_emb, ae_cfg);
        art.has_cg = true;

        // z-score statistics of the compressed channel over training days
        const Matrix z_train = encode(art.ae, train_emb);
        std::vector<double> zv(z_train.a);
        art.cg_mean = mean_of(zv);
        art.cg_sd = std::sqrt(variance_of(zv));
        if (art.cg_sd < 1e-12) art.cg_sd = 1.0;

        out.add_column(pipeline_detail::make_cg_column(frame, art.ae, art.cg_mean, art.cg_sd));
    }

    out.validate();
    for (const auto& c : out.columns()) art.channels.push_back(c.name);
    return out;
}

// Rebuild the exact training-time channels on a (possibly new) frame.
inline SeriesFrame apply_feature_frame(const SeriesFrame& frame, const FeatureArtifacts& art) {
    SeriesFrame out(frame.timestamps());
    for (const auto& name : art.channels) {
        if (name == kCgColumnName && art.has_cg) {
            out.add_column(pipeline_detail::make_cg_column(frame, art.ae, art.cg_mean, art.cg_sd));
        } else {
            out.add_column(frame.column(name));
        }
    }
    out.validate();
    return out;
}

inline nlohmann::json artifacts_to_json(const FeatureArtifacts& art) {
    nlohmann::json j;
    j["variant_groups"] = art.variant_groups;
    j["channels"] = art.channels;
    j["has_cg"] = art.has_cg;
    if (art.has_cg) {
        j["autoencoder"] = ae_to_json(art.ae);
        j["cg_mean"] = art.cg_mean;
        j["cg_sd"] = art.cg_sd;
    }
    return j;
}

inline FeatureArtifacts artifacts_from_json(const nlohmann::json& j) {
    FeatureArtifacts art;
    art.variant_groups = j.at("variant_groups").get<std::vector<std::string>>();
    art.channels = j.at("channels").get<std::vector<std::string>>();
    art.has_cg = j.at("has_cg").get<bool>();
    if (art.has_cg) {
        art.ae = ae_from_json(j.at("autoencoder"));
        art.cg_mean = j.at("cg_mean").get<double>();
        art.cg_sd = j.at("cg_sd").get<double>();
    }
    return art;
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& text_group_names() {
    static const std::vector<std::string> groups{"count", "wordfreq", "sentiment", "topic",
                                                 "embedding", "cg"};
    return groups;
}

inline std::vector<RawTable> load_input_tables(const RunConfig& cfg) {
    std::vector<RawTable> tables;
    const fs::path dir(cfg.data_dir);
    const fs::path demand = dir / "demand.csv";
    if (!fs::exists(demand)) throw MissingTargetTable("missing " + demand.string());
    tables.push_back(read_csv(demand.string(), TableKind::demand));
    if (fs::exists(dir / "temperature.csv")) {
        tables.push_back(read_csv((dir / "temperature.csv").string(), TableKind::temperature));
    }
    if (fs::exists(dir / "holidays.csv")) {
        tables.push_back(read_csv((dir / "holidays.csv").string(), TableKind::holidays));
    }
    for (const auto& group : text_group_names()) {
        const fs::path p = dir / ("text_" + group + ".csv");
        if (fs::exists(p)) {
            tables.push_back(read_csv(p.string(), TableKind::text_features, group));
        }
    }
    return tables;
}

inline DateRange default_range(const RawTable& demand) {
    if (demand.times.empty()) throw DataError(demand.source_path + ": no rows");
    Timestamp t0 = demand.times.front();
    Timestamp t1 = demand.times.back();
    Date first = date_of(t0);
    if (slot_of(t0) != 0) first += std::chrono::days{1};
    Date last = date_of(t1);
    if (slot_of(t1) != kSlotsPerDay - 1) last -= std::chrono::days{1};
    if (last < first) throw SpanTooShort("demand data does not cover a whole day");
    return {first, last};
}

inline SeriesFrame obtain_frame(const RunConfig& cfg) {
    if (cfg.synthetic) {
        return generate_synthetic(cfg.synth).first;
    }
    const auto tables = load_input_tables(cfg);
    DateRange range = default_range(tables.front());
    if (cfg.start_date) range.first = *cfg.start_date;
    if (cfg.end_date) range.last = *cfg.end_date;
    return assemble_frame(tables, range);
}

inline SeriesFrame load_frame(const RunConfig& cfg) {
    const std::string path = resolved_frame_path(cfg);
    if (!fs::exists(path)) {
        throw DataError("frame file not found: " + path + " (run the ingest command first)");
    }
    return read_frame_csv(path);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_synth(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    auto [frame, truth] = generate_synthetic(cfg.synth);

    const auto& grid = frame.timestamps();
    {
        std::vector<std::string> lines{"timestamp,demand_mw"};
        const auto& v = frame.column("demand").values;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            lines.push_back(format_timestamp(grid[i]) + "," + format_full(v[i]));
        }
        write_lines(cfg.out_dir + "/demand.csv", lines);
    }
    {
        std::vector<std::string> lines{"timestamp,temp_c"};
        const auto& v = frame.column("temp").values;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            lines.push_back(format_timestamp(grid[i]) + "," + format_full(v[i]));
        }
        write_lines(cfg.out_dir + "/temperature.csv", lines);
    }
    {
        std::vector<std::string> lines{"date"};
        const auto& v = frame.column("holiday").values;
        for (std::size_t d = 0; d < frame.n_days(); ++d) {
            if (v[d * kSlotsPerDay] > 0.5) lines.push_back(format_date(frame.day_at(d)));
        }
        write_lines(cfg.out_dir + "/holidays.csv", lines);
    }
    // group the text columns back into per-group daily tables
    for (const auto& group : text_group_names()) {
        std::vector<const Column*> cols;
        for (const auto& c : frame.columns()) {
            if (text_group_of(c.role) == group) cols.push_back(&c);
        }
        if (cols.empty()) continue;
        const std::string prefix = "text_" + group + "_";
        std::vector<std::string> header{"date"};
        for (const auto* c : cols) {
            header.push_back(c->name.rfind(prefix, 0) == 0 ? c->name.substr(prefix.size())
                                                           : c->name);
        }
        std::vector<std::string> lines{join_csv(header)};
        for (std::size_t d = 0; d < frame.n_days(); ++d) {
            std::vector<std::string> fields{format_date(frame.day_at(d))};
            for (const auto* c : cols) fields.push_back(format_full(c->values[d * kSlotsPerDay]));
            lines.push_back(join_csv(fields));
        }
        write_lines(cfg.out_dir + "/text_" + group + ".csv", lines);
    }
    {
        nlohmann::json j;
        j["description"] = truth.description;
        j["text_signal_lag"] = truth.text_signal_lag;
        j["text_signal_gain"] = truth.text_signal_gain;
        j["text_factor"] = truth.text_factor;
        if (!truth.embedding_latent.empty()) j["embedding_latent"] = truth.embedding_latent;
        std::ofstream out(cfg.out_dir + "/ground_truth.json", std::ios::binary);
        out << j.dump(2) << '\n';
    }
    write_manifest(cfg, "synth", cfg.out_dir,
                   {{"days", std::to_string(frame.n_days())},
                    {"columns", std::to_string(frame.n_cols())}});
}

inline void cmd_ingest(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const SeriesFrame frame = obtain_frame(cfg);
    write_frame_csv(frame, resolved_frame_path(cfg));
    write_manifest(cfg, "ingest", cfg.out_dir,
                   {{"frame", resolved_frame_path(cfg)},
                    {"rows", std::to_string(frame.n_rows())},
                    {"days", std::to_string(frame.n_days())},
                    {"columns", std::to_string(frame.n_cols())},
                    {"first_day", format_date(frame.first_day())},
                    {"last_day", format_date(frame.day_at(frame.n_days() - 1))}});
}

inline void cmd_textfeat(const RunConfig& cfg) {
    if (cfg.corpus_jsonl.empty()) throw UsageError("textfeat needs corpus_jsonl in the config");
    fs::create_directories(cfg.out_dir);
    const auto days = load_corpus(cfg.corpus_jsonl);
    if (days.empty()) throw DataError(cfg.corpus_jsonl + ": no documents");
    const Lexicon lex = cfg.lexicon_csv.empty() ? default_lexicon() : load_lexicon(cfg.lexicon_csv);

    write_feature_table(build_count_table(days), cfg.out_dir + "/text_count.csv");
    write_feature_table(build_sentiment_table(days, lex), cfg.out_dir + "/text_sentiment.csv");
    std::map<std::string, std::string> outputs{{"count", "text_count.csv"},
                                               {"sentiment", "text_sentiment.csv"}};
    if (!cfg.keywords.empty()) {
        write_feature_table(build_wordfreq_table(days, cfg.keywords),
                            cfg.out_dir + "/text_wordfreq.csv");
        outputs["wordfreq"] = "text_wordfreq.csv";
    }
    write_manifest(cfg, "textfeat", cfg.out_dir, outputs);
}

inline void cmd_granger(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const SeriesFrame frame = load_frame(cfg);
    const std::size_t n_days =
        cfg.split_date ? pipeline_detail::training_days(frame, *cfg.split_date) : frame.n_days();

    std::vector<NamedSeries> candidates;
    for (const auto& c : frame.columns()) {
        if (!is_text_role(c.role) || text_group_of(c.role) == "cg") continue;
        NamedSeries s;
        s.name = c.name;
        s.values.resize(n_days);
        for (std::size_t d = 0; d < n_days; ++d) s.values[d] = c.values[d * kSlotsPerDay];
        candidates.push_back(std::move(s));
    }
    if (candidates.empty()) throw DataError("frame has no text feature columns to screen");

    std::vector<double> y = frame.daily_target_means();
    y.resize(n_days);
    const auto results = granger_screen(candidates, y, cfg.granger_max_lag, cfg.granger_alpha,
                                        cfg.granger_bonferroni);
    write_granger_report(results, cfg.out_dir + "/granger_report.csv", cfg.granger_max_lag,
                         cfg.granger_alpha);
    write_manifest(cfg, "granger", cfg.out_dir,
                   {{"report", "granger_report.csv"},
                    {"features", std::to_string(results.size())}});
}

inline void cmd_autoencode(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const SeriesFrame frame = load_frame(cfg);
    const std::size_t n_train_days =
        cfg.split_date ? pipeline_detail::training_days(frame, *cfg.split_date) : frame.n_days();

    const Matrix emb = pipeline_detail::embedding_matrix(frame, nullptr);
    if (cfg.ae.channel_plan.front() != emb.cols) {
        throw ShapeMismatch("ae_plan starts at " + std::to_string(cfg.ae.channel_plan.front()) +
                            " but the embedding table has " + std::to_string(emb.cols) + " dims");
    }
    Matrix train_emb(n_train_days, emb.cols);
    for (std::size_t d = 0; d < n_train_days; ++d)
        for (std::size_t j = 0; j < emb.cols; ++j) train_emb(d, j) = emb(d, j);

    const AutoencoderModel ae = train_autoencoder(train_emb, cfg.ae);
    save_autoencoder(ae, cfg.out_dir + "/ae_checkpoint.json");

    const Matrix z = encode(ae, emb);
    TextFeatureTable cg;
    cg.group = "cg";
    cg.dim_names = {"c1"};
    for (std::size_t d = 0; d < frame.n_days(); ++d) {
        cg.dates.push_back(frame.day_at(d));
        cg.values.push_back({z(d, 0)});
    }
    write_feature_table(cg, cfg.out_dir + "/text_cg.csv");
    write_manifest(cfg, "autoencode", cfg.out_dir,
                   {{"checkpoint", "ae_checkpoint.json"},
                    {"compressed", "text_cg.csv"},
                    {"train_loss", format_sig6(ae.train_loss)},
                    {"val_loss", format_sig6(ae.val_loss)}});
}

// variant token: "base" or a '-'/'+'-joined subset of W,S,T,G,CG
inline std::vector<std::string> parse_variant(const std::string& token) {
    if (token == "base" || token.empty()) return {};
    std::vector<std::string> groups;
    std::string cur;
    for (char c : token) {
        if (c == '-' || c == '+') {
            if (!cur.empty()) groups.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) groups.push_back(cur);
    for (const auto& g : groups) group_of_letter(g); // validates
    return groups;
}

inline std::string variant_name(const std::vector<std::string>& groups) {
    std::string name = "LSTM";
    for (const auto& g : groups) name += "-" + g;
    return name;
}

struct TrainedVariant {
    LstmModel model;
    FeatureArtifacts artifacts;
    SeriesFrame feature_frame;
};

inline TrainedVariant train_variant(const RunConfig& cfg, const SeriesFrame& frame,
                                    const std::vector<std::string>& groups,
                                    const std::string& dir) {
    fs::create_directories(dir);
    TrainedVariant tv;
    tv.feature_frame = build_feature_frame(frame, cfg, groups, tv.artifacts);
    const WindowSet windows = make_windows(tv.feature_frame, require_split(cfg));
    if (windows.train.size() < 10) {
        throw TooFewWindows("need >= 10 training windows, have " +
                            std::to_string(windows.train.size()));
    }
    tv.model = train_lstm(windows.train, windows.channels, cfg.train);

    nlohmann::json j = lstm_to_json(tv.model);
    j["features"] = artifacts_to_json(tv.artifacts);
    j["variant"] = variant_name(groups);
    std::ofstream out(dir + "/checkpoint.json", std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint in " + dir);
    out << j.dump(2) << '\n';

    if (!tv.artifacts.granger.empty()) {
        write_granger_report(tv.artifacts.granger, dir + "/granger_report.csv",
                             cfg.granger_max_lag, cfg.granger_alpha);
    }
    if (tv.artifacts.has_cg) save_autoencoder(tv.artifacts.ae, dir + "/ae_checkpoint.json");

    std::vector<std::string> log_lines{"epoch,train_loss,val_loss"};
    for (const auto& row : tv.model.training_log) {
        log_lines.push_back(join_csv({format_sig6(row[0]), format_sig6(row[1]),
                                      format_sig6(row[2])}));
    }
    write_lines(dir + "/training_log.csv", log_lines);
    return tv;
}

struct LoadedCheckpoint {
    LstmModel model;
    FeatureArtifacts artifacts;
    std::string variant = "LSTM";
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointVersionMismatch(path + ": unreadable checkpoint: " + e.what());
    }
    LoadedCheckpoint lc;
    lc.model = lstm_from_json(j);
    if (j.contains("features")) lc.artifacts = artifacts_from_json(j["features"]);
    if (j.contains("variant")) lc.variant = j["variant"].get<std::string>();
    if (lc.artifacts.channels.empty()) lc.artifacts.channels = lc.model.norm.channels;
    return lc;
}

inline void cmd_train(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const SeriesFrame frame = load_frame(cfg);
    train_variant(cfg, frame, cfg.groups, cfg.out_dir);
    write_manifest(cfg, "train", cfg.out_dir,
                   {{"checkpoint", "checkpoint.json"},
                    {"variant", variant_name(cfg.groups)}});
}

inline std::vector<ForecastResult> forecast_test_windows(const LoadedCheckpoint& lc,
                                                         const SeriesFrame& frame,
                                                         const RunConfig& cfg,
                                                         std::vector<std::vector<double>>* truths) {
    const SeriesFrame ff = apply_feature_frame(frame, lc.artifacts);
    const WindowSet windows = make_windows(ff, require_split(cfg));
    if (windows.test.empty()) throw SpanTooShort("no test windows beyond the split date");
    std::vector<ForecastResult> out;
    out.reserve(windows.test.size());
    for (const auto& w : windows.test) {
        out.push_back(predict(lc.model, w));
        if (truths) truths->push_back(w.target);
    }
    return out;
}

inline void cmd_predict(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const LoadedCheckpoint lc = load_checkpoint(resolved_checkpoint_path(cfg));
    const SeriesFrame frame = load_frame(cfg);
    const auto forecasts = forecast_test_windows(lc, frame, cfg, nullptr);

    std::vector<std::string> header{"anchor_day", "slot", "point"};
    for (double q : lc.model.quantile_levels) header.push_back("q" + format_sig6(q));
    std::vector<std::string> lines{join_csv(header)};
    for (const auto& f : forecasts) {
        for (int k = 0; k < kSlotsPerDay; ++k) {
            std::vector<std::string> fields{format_date(f.anchor_day), std::to_string(k),
                                            format_full(f.point[k])};
            for (std::size_t q = 0; q < f.quantile_levels.size(); ++q) {
                fields.push_back(format_full(f.quantiles(q, k)));
            }
            lines.push_back(join_csv(fields));
        }
    }
    write_lines(cfg.out_dir + "/predictions.csv", lines);
    write_manifest(cfg, "predict", cfg.out_dir,
                   {{"predictions", "predictions.csv"},
                    {"windows", std::to_string(forecasts.size())}});
}

inline MetricReport evaluate_checkpoint(const LoadedCheckpoint& lc, const SeriesFrame& frame,
                                        const RunConfig& cfg) {
    std::vector<std::vector<double>> truths;
    const auto forecasts = forecast_test_windows(lc, frame, cfg, &truths);
    ReportOptions opts;
    opts.model_name = lc.variant;
    opts.residual_sd = lc.model.residual_sd;
    opts.interval_alpha = cfg.interval_alpha;
    return segment_report(forecasts, truths, opts);
}

inline void cmd_evaluate(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const LoadedCheckpoint lc = load_checkpoint(resolved_checkpoint_path(cfg));
    const SeriesFrame frame = load_frame(cfg);
    const MetricReport rep = evaluate_checkpoint(lc, frame, cfg);
    {
        std::ofstream out(cfg.out_dir + "/metrics.json", std::ios::binary);
        if (!out) throw DataError("cannot write metrics.json");
        out << report_to_json(rep).dump(2) << '\n';
    }
    write_report_files(rep, cfg.out_dir);
    write_manifest(cfg, "evaluate", cfg.out_dir,
                   {{"metrics", "metrics.json"}, {"model", rep.model}});
}

// Trains one model per variant with the same seed and split, evaluates each
// on the test span, and emits a comparison grid against the first variant.
inline void cmd_ablate(const RunConfig& cfg, const std::vector<std::string>& variant_tokens) {
    if (variant_tokens.empty()) throw UsageError("ablate needs at least one variant");
    fs::create_directories(cfg.out_dir);
    const SeriesFrame frame = load_frame(cfg);

    std::vector<DeterministicRow> rows;
    std::vector<std::string> failures;
    std::string baseline_name;
    for (std::size_t i = 0; i < variant_tokens.size(); ++i) {
        const auto groups = parse_variant(variant_tokens[i]);
        const std::string name = variant_name(groups);
        if (i == 0) baseline_name = name;
        const std::string dir = cfg.out_dir + "/" + (variant_tokens[i].empty()
                                                          ? "base"
                                                          : variant_tokens[i]);
        try {
            const TrainedVariant tv = train_variant(cfg, frame, groups, dir);
            LoadedCheckpoint lc;
            lc.model = tv.model;
            lc.artifacts = tv.artifacts;
            lc.variant = name;
            const MetricReport rep = evaluate_checkpoint(lc, frame, cfg);
            {
                std::ofstream out(dir + "/metrics.json", std::ios::binary);
                out << report_to_json(rep).dump(2) << '\n';
            }
            write_report_files(rep, dir);
            rows.push_back({name, rep.rmse, rep.mae, rep.smape});
        } catch (const std::exception& e) {
            failures.push_back(variant_tokens[i] + ": " + e.what());
        }
    }
    if (rows.empty()) {
        throw ModelError("every ablation variant failed: " +
                         (failures.empty() ? "unknown" : failures.front()));
    }
    const auto comparison = compare_models(rows, baseline_name);
    write_comparison_csv(comparison, cfg.out_dir + "/comparison.csv");

    std::map<std::string, std::string> extra{{"comparison", "comparison.csv"}};
    for (std::size_t i = 0; i < failures.size(); ++i) {
        extra["failure_" + std::to_string(i)] = failures[i];
    }
    write_manifest(cfg, "ablate", cfg.out_dir, extra);
}

inline void cmd_report(const RunConfig& cfg, const std::vector<std::string>& metric_files,
                       const std::string& baseline) {
    if (metric_files.empty()) throw UsageError("report needs metrics.json paths");
    fs::create_directories(cfg.out_dir);
    std::vector<DeterministicRow> rows;
    for (const auto& path : metric_files) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path);
        nlohmann::json j;
        in >> j;
        const MetricReport rep = report_from_json(j);
        rows.push_back({rep.model, rep.rmse, rep.mae, rep.smape});
    }
    const std::string base = baseline.empty() ? rows.front().model : baseline;
    const auto comparison = compare_models(rows, base);
    write_comparison_csv(comparison, cfg.out_dir + "/comparison.csv");
    write_manifest(cfg, "report", cfg.out_dir, {{"comparison", "comparison.csv"}});
}

} // namespace loadcast

#endif
