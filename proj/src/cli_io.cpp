#include "debias/cli_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "debias/baselines.hpp"
#include "debias/rng.hpp"

namespace debias {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::ifstream open_or_throw(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingFile", "cannot open " + path.string());
    return in;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("WriteFailed", "cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& path) {
    std::ostringstream csv;
    csv << "user_id,item_id,exposure,click,x_nr";
    for (int j = 0; j < dataset.feature_dim; ++j) csv << ",x_r_" << j;
    csv << "\n";
    for (const auto& r : dataset.records) {
        csv << r.user_id << ',' << r.item_id << ',' << r.exposure << ',' << r.click << ','
            << fmt17(r.x_nr);
        for (double v : r.x_r) csv << ',' << fmt17(v);
        csv << "\n";
    }
    write_text_atomic(path, csv.str());

    nlohmann::json schema{{"version", 1},
                          {"feature_dim", dataset.feature_dim},
                          {"split", to_string(dataset.split)},
                          {"x_nr_kind", to_string(dataset.x_nr_kind)},
                          {"x_nr_labels", dataset.x_nr_labels}};
    write_text_atomic(path.string() + ".schema.json", schema.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& path) {
    auto sidecar = path.string() + ".schema.json";
    nlohmann::json schema = nlohmann::json::parse(open_or_throw(sidecar));

    Dataset d;
    d.feature_dim = schema.at("feature_dim");
    d.split = split_from_string(schema.at("split"));
    d.x_nr_kind = xnr_kind_from_string(schema.at("x_nr_kind"));
    d.x_nr_labels = schema.value("x_nr_labels", std::vector<std::string>{});

    auto in = open_or_throw(path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_line(line);
        if (static_cast<int>(f.size()) != 5 + d.feature_dim)
            throw Error("ShapeMismatch", "row width does not match schema in " + path.string());
        InteractionRecord r;
        r.user_id = f[0];
        r.item_id = f[1];
        r.exposure = std::stoi(f[2]);
        r.click = std::stoi(f[3]);
        r.x_nr = std::stod(f[4]);
        for (int j = 0; j < d.feature_dim; ++j)
            r.x_r.push_back(std::stod(f[static_cast<std::size_t>(5 + j)]));
        d.records.push_back(std::move(r));
    }
    return d;
}

Dataset load_csv(const fs::path& path, const SchemaMapping& mapping,
                 std::vector<std::string>* warnings) {
    auto in = open_or_throw(path);
    std::string line;
    if (!std::getline(in, line)) throw Error("MissingColumn", "empty file " + path.string());
    auto header = split_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

    auto require = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw Error("MissingColumn", "column '" + name + "' not found");
        return it->second;
    };
    std::size_t c_user = require(mapping.user_col);
    std::size_t c_item = require(mapping.item_col);
    std::size_t c_xnr = require(mapping.x_nr_col);
    std::vector<std::size_t> c_xr;
    for (const auto& name : mapping.x_r_cols) c_xr.push_back(require(name));
    bool has_exposure = !mapping.exposure_col.empty();
    bool has_click = !mapping.click_col.empty();
    std::size_t c_exp = has_exposure ? require(mapping.exposure_col) : 0;
    std::size_t c_clk = has_click ? require(mapping.click_col) : 0;

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split_line(line));
    }

    // detect categorical x_r columns; one-hot in sorted label order
    std::vector<bool> categorical(c_xr.size(), false);
    std::vector<std::vector<std::string>> labels(c_xr.size());
    for (std::size_t j = 0; j < c_xr.size(); ++j) {
        std::set<std::string> distinct;
        for (const auto& row : rows) {
            if (!is_number(row.at(c_xr[j]))) categorical[j] = true;
            distinct.insert(row.at(c_xr[j]));
        }
        if (categorical[j]) labels[j].assign(distinct.begin(), distinct.end());
    }

    Dataset d;
    d.split = mapping.split;

    // bias attribute: numeric everywhere -> continuous, else categorical
    bool xnr_numeric = true;
    std::set<std::string> xnr_labels;
    for (const auto& row : rows) {
        if (!is_number(row.at(c_xnr))) xnr_numeric = false;
        xnr_labels.insert(row.at(c_xnr));
    }
    if (!xnr_numeric) {
        d.x_nr_kind = XnrKind::categorical;
        d.x_nr_labels.assign(xnr_labels.begin(), xnr_labels.end());
    }

    if (!has_exposure && warnings)
        warnings->push_back("no exposure column mapped; defaulting exposure=1");

    for (const auto& row : rows) {
        InteractionRecord r;
        r.user_id = row.at(c_user);
        r.item_id = row.at(c_item);
        for (std::size_t j = 0; j < c_xr.size(); ++j) {
            const std::string& v = row.at(c_xr[j]);
            if (categorical[j]) {
                for (const auto& lab : labels[j]) r.x_r.push_back(v == lab ? 1.0 : 0.0);
            } else {
                if (!is_number(v)) throw Error("NonNumericFeature", "bad value '" + v + "'");
                r.x_r.push_back(std::stod(v));
            }
        }
        if (!xnr_numeric) {
            auto it = std::lower_bound(d.x_nr_labels.begin(), d.x_nr_labels.end(), row.at(c_xnr));
            r.x_nr = static_cast<double>(it - d.x_nr_labels.begin());
        } else {
            r.x_nr = std::stod(row.at(c_xnr));
        }
        r.exposure = has_exposure ? std::stoi(row.at(c_exp)) : 1;
        r.click = has_click ? std::stoi(row.at(c_clk)) : 0;
        d.records.push_back(std::move(r));
    }
    d.feature_dim = d.records.empty() ? 0 : static_cast<int>(d.records.front().x_r.size());
    return d;
}

// ---- Coat ------------------------------------------------------------------

namespace {

std::vector<std::vector<int>> read_int_grid(const fs::path& path, int rows, int cols) {
    auto in = open_or_throw(path);
    std::vector<std::vector<int>> grid;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        std::vector<int> row;
        int v;
        while (ss >> v) row.push_back(v);
        grid.push_back(std::move(row));
    }
    if (static_cast<int>(grid.size()) != rows)
        throw Error("ShapeMismatch", path.string() + ": expected " + std::to_string(rows) + " rows");
    for (const auto& row : grid)
        if (static_cast<int>(row.size()) != cols)
            throw Error("ShapeMismatch", path.string() + ": expected " + std::to_string(cols) + " columns");
    return grid;
}

std::vector<std::vector<int>> read_feature_matrix(const fs::path& path, int rows) {
    auto in = open_or_throw(path);
    std::vector<std::vector<int>> grid;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        std::vector<int> row;
        int v;
        while (ss >> v) row.push_back(v);
        grid.push_back(std::move(row));
    }
    if (static_cast<int>(grid.size()) != rows)
        throw Error("ShapeMismatch", path.string() + ": expected " + std::to_string(rows) + " rows");
    return grid;
}

}  // namespace

CoatData load_coat(const fs::path& dir, int n_users, int n_items) {
    auto train_grid = read_int_grid(dir / "train.ascii", n_users, n_items);
    auto test_grid = read_int_grid(dir / "test.ascii", n_users, n_items);
    auto user_feat = read_feature_matrix(dir / "user_item_features" / "user_features.ascii", n_users);
    auto item_feat = read_feature_matrix(dir / "user_item_features" / "item_features.ascii", n_items);

    std::map<int, double> mnar_hist, mar_hist;
    std::size_t observed = 0;
    auto tally = [&](const std::vector<std::vector<int>>& grid, std::map<int, double>& hist,
                     bool count_observed) {
        for (const auto& row : grid)
            for (int v : row) {
                if (v == 0) continue;
                if (v < 1 || v > 5) throw Error("RatingOutOfRange", "rating " + std::to_string(v));
                hist[v] += 1.0;
                if (count_observed) ++observed;
            }
    };
    tally(train_grid, mnar_hist, true);
    tally(test_grid, mar_hist, false);

    double observed_fraction =
        static_cast<double>(observed) / (static_cast<double>(n_users) * n_items);
    PropensityModel prop = fit_nb_propensity(mnar_hist, mar_hist, observed_fraction);

    auto build = [&](const std::vector<std::vector<int>>& grid, Split split) {
        Dataset d;
        d.split = split;
        d.x_nr_kind = XnrKind::continuous;
        d.feature_dim = static_cast<int>(user_feat[0].size() + item_feat[0].size());
        for (int ui = 0; ui < n_users; ++ui)
            for (int ii = 0; ii < n_items; ++ii) {
                int rating = grid[static_cast<std::size_t>(ui)][static_cast<std::size_t>(ii)];
                if (rating == 0) continue;
                InteractionRecord r;
                r.user_id = "u" + std::to_string(ui);
                r.item_id = "i" + std::to_string(ii);
                for (int v : user_feat[static_cast<std::size_t>(ui)]) r.x_r.push_back(v);
                for (int v : item_feat[static_cast<std::size_t>(ii)]) r.x_r.push_back(v);
                r.x_nr = prop.at(rating);
                r.exposure = 1;
                r.click = rating >= 4 ? 1 : 0;
                d.records.push_back(std::move(r));
            }
        return d;
    };

    CoatData out;
    out.train = build(train_grid, Split::train);
    out.test = build(test_grid, Split::benchmark);
    out.propensity_model = prop.to_json();
    return out;
}

// ---- config (de)serialization ----------------------------------------------

nlohmann::json click_config_to_json(const ClickModelConfig& cfg) {
    return {{"model_kind", cfg.model_kind == ClickModelKind::logistic ? "logistic" : "boosted_stumps"},
            {"l2", cfg.l2},
            {"learning_rate", cfg.learning_rate},
            {"epochs", cfg.epochs},
            {"n_stumps", cfg.n_stumps},
            {"shrinkage", cfg.shrinkage},
            {"include_bias_factor", cfg.include_bias_factor},
            {"seed", cfg.seed}};
}

ClickModelConfig click_config_from_json(const nlohmann::json& j) {
    ClickModelConfig cfg;
    std::string kind = j.value("model_kind", "logistic");
    cfg.model_kind = kind == "logistic" ? ClickModelKind::logistic : ClickModelKind::boosted_stumps;
    cfg.l2 = j.value("l2", cfg.l2);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.n_stumps = j.value("n_stumps", cfg.n_stumps);
    cfg.shrinkage = j.value("shrinkage", cfg.shrinkage);
    cfg.include_bias_factor = j.value("include_bias_factor", cfg.include_bias_factor);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
    return {{"k", cfg.k},
            {"lambda", cfg.lambda},
            {"dependence_target",
             cfg.dependence_target == DependenceTarget::exposure ? "exposure" : "bias_attribute"},
            {"perturbation",
             {{"perturb_fraction", cfg.perturbation.perturb_fraction},
              {"mode", cfg.perturbation.mode == PerturbMode::partial ? "partial" : "full"},
              {"seed", cfg.perturbation.seed}}},
            {"cmi",
             {{"hidden_layers", cfg.cmi.hidden_layers},
              {"activation", cfg.cmi.activation == Activation::relu ? "relu" : "tanh"},
              {"learning_rate", cfg.cmi.learning_rate},
              {"epochs", cfg.cmi.epochs},
              {"batch_size", cfg.cmi.batch_size},
              {"ema_decay", cfg.cmi.ema_decay},
              {"knn_k", cfg.cmi.knn_k},
              {"seed", cfg.cmi.seed}}},
            {"click", click_config_to_json(cfg.click)},
            {"bo",
             {{"n_iter", cfg.bo.n_iter},
              {"n_init", cfg.bo.n_init},
              {"kernel", cfg.bo.kernel == GpKernel::matern52 ? "matern52" : "rbf"},
              {"length_scale", cfg.bo.length_scale},
              {"noise_variance", cfg.bo.noise_variance},
              {"xi", cfg.bo.xi},
              {"n_candidates", cfg.bo.n_candidates},
              {"bound_lo", cfg.bo.bounds.empty() ? 0.05 : cfg.bo.bounds[0].first},
              {"bound_hi", cfg.bo.bounds.empty() ? 1.0 : cfg.bo.bounds[0].second},
              {"seed", cfg.bo.seed}}},
            {"n_folds", cfg.n_folds},
            {"loop_cmi_epochs", cfg.loop_cmi_epochs},
            {"loop_click_epochs", cfg.loop_click_epochs},
            {"seed", cfg.seed}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    cfg.k = j.value("k", cfg.k);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.dependence_target = j.value("dependence_target", "exposure") == std::string("exposure")
                                ? DependenceTarget::exposure
                                : DependenceTarget::bias_attribute;
    if (j.contains("perturbation")) {
        const auto& p = j["perturbation"];
        cfg.perturbation.perturb_fraction = p.value("perturb_fraction", 0.1);
        cfg.perturbation.mode =
            p.value("mode", "partial") == std::string("full") ? PerturbMode::full : PerturbMode::partial;
        cfg.perturbation.seed = p.value("seed", std::uint64_t{0});
    }
    if (j.contains("cmi")) {
        const auto& c = j["cmi"];
        cfg.cmi.hidden_layers = c.value("hidden_layers", cfg.cmi.hidden_layers);
        cfg.cmi.activation =
            c.value("activation", "relu") == std::string("relu") ? Activation::relu : Activation::tanh_act;
        cfg.cmi.learning_rate = c.value("learning_rate", cfg.cmi.learning_rate);
        cfg.cmi.epochs = c.value("epochs", cfg.cmi.epochs);
        cfg.cmi.batch_size = c.value("batch_size", cfg.cmi.batch_size);
        cfg.cmi.ema_decay = c.value("ema_decay", cfg.cmi.ema_decay);
        cfg.cmi.knn_k = c.value("knn_k", cfg.cmi.knn_k);
        cfg.cmi.seed = c.value("seed", cfg.cmi.seed);
    }
    if (j.contains("click")) cfg.click = click_config_from_json(j["click"]);
    if (j.contains("bo")) {
        const auto& b = j["bo"];
        cfg.bo.n_iter = b.value("n_iter", cfg.bo.n_iter);
        cfg.bo.n_init = b.value("n_init", cfg.bo.n_init);
        cfg.bo.kernel =
            b.value("kernel", "matern52") == std::string("rbf") ? GpKernel::rbf : GpKernel::matern52;
        cfg.bo.length_scale = b.value("length_scale", cfg.bo.length_scale);
        cfg.bo.noise_variance = b.value("noise_variance", cfg.bo.noise_variance);
        cfg.bo.xi = b.value("xi", cfg.bo.xi);
        cfg.bo.n_candidates = b.value("n_candidates", cfg.bo.n_candidates);
        double lo = b.value("bound_lo", 0.05), hi = b.value("bound_hi", 1.0);
        if (b.contains("bound_lo") || b.contains("bound_hi"))
            cfg.bo.bounds.assign(static_cast<std::size_t>(std::max(cfg.k, 1)), {lo, hi});
        cfg.bo.seed = b.value("seed", cfg.bo.seed);
    }
    cfg.n_folds = j.value("n_folds", cfg.n_folds);
    cfg.loop_cmi_epochs = j.value("loop_cmi_epochs", cfg.loop_cmi_epochs);
    cfg.loop_click_epochs = j.value("loop_click_epochs", cfg.loop_click_epochs);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json srcs = nlohmann::json::array();
    for (const auto& s : sources)
        srcs.push_back({{"name", s.name},
                        {"kind", s.kind},
                        {"path", s.path},
                        {"from", s.from},
                        {"fraction", s.fraction},
                        {"part", s.part}});
    nlohmann::json scns = nlohmann::json::array();
    for (const auto& s : scenarios)
        scns.push_back({{"id", s.id},
                        {"train_source", s.train_source},
                        {"eval_source", s.eval_source},
                        {"debias_target", s.debias_target},
                        {"eval_method", s.eval_method},
                        {"train_weighting", s.train_weighting},
                        {"include_bias_factor", s.include_bias_factor},
                        {"benchmark", s.benchmark}});
    return {{"sources", srcs},
            {"scenarios", scns},
            {"pipeline", pipeline_config_to_json(pipeline)},
            {"model", click_config_to_json(model)},
            {"threshold", threshold},
            {"output_dir", output_dir},
            {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    for (const auto& s : j.value("sources", nlohmann::json::array())) {
        SourceSpec spec;
        spec.name = s.at("name");
        spec.kind = s.at("kind");
        spec.path = s.value("path", "");
        spec.from = s.value("from", "");
        spec.fraction = s.value("fraction", 0.2);
        spec.part = s.value("part", "head");
        cfg.sources.push_back(std::move(spec));
    }
    std::set<std::string> ids;
    for (const auto& s : j.value("scenarios", nlohmann::json::array())) {
        ScenarioConfig sc;
        sc.id = s.at("id");
        if (!ids.insert(sc.id).second) throw Error("BadConfig", "duplicate scenario id " + sc.id);
        sc.train_source = s.at("train_source");
        sc.eval_source = s.at("eval_source");
        sc.debias_target = s.value("debias_target", "none");
        sc.eval_method = s.value("eval_method", "plain");
        sc.train_weighting = s.value("train_weighting", "none");
        sc.include_bias_factor = s.value("include_bias_factor", false);
        sc.benchmark = s.value("benchmark", "");
        cfg.scenarios.push_back(std::move(sc));
    }
    if (j.contains("pipeline")) cfg.pipeline = pipeline_config_from_json(j["pipeline"]);
    if (j.contains("model")) cfg.model = click_config_from_json(j["model"]);
    cfg.threshold = j.value("threshold", 0.5);
    cfg.output_dir = j.value("output_dir", "out");
    cfg.seed = j.value("seed", std::uint64_t{0});
    return cfg;
}

// ---- experiment runner -------------------------------------------------------

namespace {

std::string drift_cell(double value, const double* bench) {
    std::ostringstream os;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    os << buf;
    os << ',';
    if (bench && *bench != 0.0) {
        std::snprintf(buf, sizeof buf, "%.2f", 100.0 * (value - *bench) / *bench);
        os << buf;
    }
    return os.str();
}

}  // namespace

std::string consolidated_csv(const std::vector<std::pair<std::string, EvalReport>>& rows,
                             const std::map<std::string, std::string>& benchmark_of) {
    std::map<std::string, const EvalReport*> by_id;
    for (const auto& [id, rep] : rows) by_id[id] = &rep;

    std::ostringstream os;
    os << "scenario,auc,auc_drift_pct,precision,precision_drift_pct,"
          "recall,recall_drift_pct,f1,f1_drift_pct\n";
    for (const auto& [id, rep] : rows) {
        const EvalReport* bench = nullptr;
        auto it = benchmark_of.find(id);
        if (it != benchmark_of.end() && !it->second.empty()) {
            auto bit = by_id.find(it->second);
            if (bit != by_id.end()) bench = bit->second;
        }
        auto cell = [&](double v, double bv) {
            double b = bv;
            return drift_cell(v, bench ? &b : nullptr);
        };
        os << id << ',' << cell(rep.auc, bench ? bench->auc : 0.0) << ','
           << cell(rep.precision, bench ? bench->precision : 0.0) << ','
           << cell(rep.recall, bench ? bench->recall : 0.0) << ','
           << cell(rep.f1, bench ? bench->f1 : 0.0) << "\n";
    }
    return os.str();
}

namespace {

std::string trace_csv(const DebiasResult& res) {
    std::ostringstream os;
    os << "trial";
    for (int k = 0; k < res.bins.k; ++k) os << ",w_" << (k + 1);
    os << ",loss,cmi_term,bce_term\n";
    for (std::size_t t = 0; t < res.trace.points.size(); ++t) {
        os << t;
        for (double w : res.trace.points[t]) os << ',' << fmt17(w);
        const auto& c = res.trial_components[t];
        os << ',' << fmt17(c.loss) << ',' << fmt17(c.cmi_term) << ',' << fmt17(c.bce_term) << "\n";
    }
    return os.str();
}

nlohmann::json debias_summary_json(const DebiasResult& res) {
    return {{"optimal_weights", res.optimal_weights.w},
            {"best_loss", res.trace.best_value},
            {"best_trial", res.trace.best_index},
            {"final_seed", res.final_seed},
            {"pre_cmi", res.pre_cmi.value},
            {"post_cmi", res.post_cmi.value},
            {"pre_bce", res.pre_bce},
            {"post_bce", res.post_bce},
            {"duplicate_fraction", res.duplicate_fraction},
            {"effective_k", res.bins.k},
            {"degenerate_bins", res.bins.degenerate}};
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.output_dir);

    // resolve sources in declaration order (splits may reference earlier names)
    std::map<std::string, Dataset> data;
    std::map<std::string, CoatData> coat_cache;
    for (const auto& s : cfg.sources) {
        if (s.kind == "csv") {
            data[s.name] = load_dataset(s.path);
        } else if (s.kind == "coat_train" || s.kind == "coat_test") {
            if (!coat_cache.count(s.path)) coat_cache[s.path] = load_coat(s.path);
            data[s.name] = s.kind == "coat_train" ? coat_cache[s.path].train : coat_cache[s.path].test;
        } else if (s.kind == "split") {
            auto it = data.find(s.from);
            if (it == data.end()) throw Error("BadConfig", "split source '" + s.from + "' unknown");
            const Dataset& base = it->second;
            std::vector<std::size_t> order(base.records.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng::SeqRng shuffle(rng::derive(cfg.seed, "split", rng::tag_hash(s.from)), 0);
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle.index(i)]);
            std::size_t n_head = static_cast<std::size_t>(
                std::llround(s.fraction * static_cast<double>(base.records.size())));
            Dataset part = base;
            part.records.clear();
            if (s.part == "head") {
                std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_head));
                std::sort(keep.begin(), keep.end());
                for (std::size_t i : keep) part.records.push_back(base.records[i]);
            } else {
                std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(n_head), order.end());
                std::sort(keep.begin(), keep.end());
                for (std::size_t i : keep) part.records.push_back(base.records[i]);
            }
            data[s.name] = std::move(part);
        } else {
            throw Error("BadConfig", "unknown source kind '" + s.kind + "'");
        }
    }

    // debias runs are cached per source so scenarios sharing one reuse it
    std::map<std::string, DebiasResult> debiased;
    auto debias_source = [&](const std::string& source) -> const DebiasResult& {
        auto it = debiased.find(source);
        if (it != debiased.end()) return it->second;
        PipelineConfig pcfg = cfg.pipeline;
        pcfg.seed = rng::derive(cfg.seed, "debias", rng::tag_hash(source));
        DebiasResult res = debias(data.at(source), pcfg);
        auto [pos, inserted] = debiased.emplace(source, std::move(res));
        const DebiasResult& ref = pos->second;
        fs::path base = fs::path(cfg.output_dir) / ("debias_" + source);
        write_text_atomic(base.string() + "_trace.csv", trace_csv(ref));
        write_text_atomic(base.string() + "_weights.json", debias_summary_json(ref).dump(2) + "\n");
        save_dataset(ref.debiased, base.string() + "_data.csv");
        return ref;
    };

    std::vector<std::pair<std::string, EvalReport>> reports;
    nlohmann::json statuses = nlohmann::json::object();
    std::map<std::string, std::string> benchmark_of;

    for (const auto& sc : cfg.scenarios) {
        benchmark_of[sc.id] = sc.benchmark;
        try {
            if (!data.count(sc.train_source) || !data.count(sc.eval_source))
                throw Error("BadConfig", "scenario references unknown source");

            Dataset train = data.at(sc.train_source);
            Dataset eval_set = data.at(sc.eval_source);
            if (sc.debias_target == "train") train = debias_source(sc.train_source).debiased;
            else if (sc.debias_target == "eval") eval_set = debias_source(sc.eval_source).debiased;
            else if (sc.debias_target != "none")
                throw Error("BadConfig", "unknown debias_target '" + sc.debias_target + "'");

            ClickModelConfig mcfg = cfg.model;
            mcfg.include_bias_factor = sc.include_bias_factor;
            mcfg.seed = rng::derive(cfg.seed, "model", rng::tag_hash(sc.id));
            std::vector<double> train_weights;
            if (sc.train_weighting == "ips") {
                for (const auto& r : train.records)
                    train_weights.push_back(1.0 / std::clamp(r.x_nr, 0.01, 1.0));
            } else if (sc.train_weighting != "none") {
                throw Error("BadConfig", "unknown train_weighting '" + sc.train_weighting + "'");
            }
            FittedClickModel model = fit(train, mcfg, train_weights);

            EvalReport rep;
            if (sc.eval_method == "plain") {
                auto scores = predict_dataset(model, eval_set);
                std::vector<int> labels;
                for (const auto& r : eval_set.records) labels.push_back(r.click);
                rep = evaluate(scores, labels, cfg.threshold);
            } else if (sc.eval_method == "ips") {
                std::vector<double> prop;
                for (const auto& r : eval_set.records) prop.push_back(r.x_nr);
                rep = ips_evaluate(model, eval_set, prop, cfg.threshold);
            } else if (sc.eval_method == "stratified") {
                BinAssignment bins = discretize(eval_set, cfg.pipeline.k);
                rep = stratified_evaluate(model, eval_set, bins, cfg.threshold);
            } else {
                throw Error("BadConfig", "unknown eval_method '" + sc.eval_method + "'");
            }
            rep.scenario = sc.id;
            reports.emplace_back(sc.id, rep);

            nlohmann::json j = rep.to_json();
            j["train_source"] = sc.train_source;
            j["eval_source"] = sc.eval_source;
            j["debias_target"] = sc.debias_target;
            j["eval_method"] = sc.eval_method;
            j["include_bias_factor"] = sc.include_bias_factor;
            write_text_atomic(fs::path(cfg.output_dir) / ("report_" + sc.id + ".json"),
                              j.dump(2) + "\n");
            statuses[sc.id] = "ok";
        } catch (const std::exception& e) {
            statuses[sc.id] = std::string("failed: ") + e.what();
        }
    }

    write_text_atomic(fs::path(cfg.output_dir) / "consolidated.csv",
                      consolidated_csv(reports, benchmark_of));

    nlohmann::json manifest{{"version", "1.0"},
                            {"config", cfg.to_json()},
                            {"scenario_status", statuses}};
    write_text_atomic(fs::path(cfg.output_dir) / "manifest.json", manifest.dump(2) + "\n");
}

void write_score_distribution_csv(const fs::path& path, const std::vector<double>& pre,
                                  const std::vector<double>& post,
                                  const std::vector<double>& reference, int n_bins) {
    if (n_bins < 1) throw Error("BadConfig", "n_bins must be positive");
    auto density = [&](const std::vector<double>& v, int b) {
        if (v.empty()) return 0.0;
        double lo = static_cast<double>(b) / n_bins, hi = static_cast<double>(b + 1) / n_bins;
        std::size_t c = 0;
        for (double x : v)
            if (x >= lo && (x < hi || (b + 1 == n_bins && x <= hi))) ++c;
        return static_cast<double>(c) / static_cast<double>(v.size()) * n_bins;
    };
    std::ostringstream os;
    os << "bin,pre_density,post_density,reference_density\n";
    for (int b = 0; b < n_bins; ++b) {
        double mid = (static_cast<double>(b) + 0.5) / n_bins;
        os << fmt17(mid) << ',' << fmt17(density(pre, b)) << ',' << fmt17(density(post, b)) << ','
           << fmt17(density(reference, b)) << "\n";
    }
    write_text_atomic(path, os.str());
}

}  // namespace debias
