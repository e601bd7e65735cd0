#include "eval.hpp"

#include <algorithm>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "curriculum.hpp"
#include "io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrckg {

double rank_from_scores(const std::vector<double>& scores, EntityId gold,
                        const std::function<bool(EntityId)>& keep) {
    if (gold < 0 || gold >= static_cast<EntityId>(scores.size()))
        throw Fault("rank_from_scores: gold out of range");
    const double gs = scores[static_cast<size_t>(gold)];
    int64_t better = 0, tied = 0;
    for (size_t c = 0; c < scores.size(); ++c) {
        const EntityId e = static_cast<EntityId>(c);
        if (e == gold || !keep(e)) continue;
        if (scores[c] > gs)
            ++better;
        else if (scores[c] == gs)
            ++tied;
    }
    return 1.0 + static_cast<double>(better) + static_cast<double>(tied) / 2.0;
}

EntityId top1_from_scores(const std::vector<double>& scores,
                          const std::function<bool(EntityId)>& keep) {
    EntityId best = -1;
    for (size_t c = 0; c < scores.size(); ++c) {
        const EntityId e = static_cast<EntityId>(c);
        if (!keep(e)) continue;
        if (best < 0 || scores[c] > scores[static_cast<size_t>(best)]) best = e;
    }
    return best;
}

const MetricCell& MetricMatrix::at(int i, int j) const {
    if (!has(i, j)) throw Fault("metric matrix: no cell (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
    return rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
}

bool MetricMatrix::has(int i, int j) const {
    return i >= 0 && i < T() && j >= 0 &&
           j < static_cast<int>(rows[static_cast<size_t>(i)].size());
}

ModelScorer::ModelScorer(const Model& model, const ModalityView& view) : model_(model) {
    refs_ = register_params(tape_, model_.params);
    graph_ = encode_all_entities(tape_, refs_, model_.config, view, model_.entity_count());
}

std::vector<double> ModelScorer::tail_scores(EntityId h, RelationId r) const {
    Val v = score_all_tails(tape_, refs_, model_.config, graph_, h, r);
    const Tensor& t = tape_.value(v);
    return std::vector<double>(t.data(), t.data() + t.size());
}

std::vector<double> ModelScorer::head_scores(RelationId r, EntityId t) const {
    Val v = score_all_heads(tape_, refs_, model_.config, graph_, r, t);
    const Tensor& tv = tape_.value(v);
    return std::vector<double>(tv.data(), tv.data() + tv.size());
}

std::vector<QueryOutcome> evaluate_split(const ModelScorer& scorer, const TripleSet& filter,
                                         const std::vector<Triple>& split, int source_snapshot) {
    std::vector<QueryOutcome> out;
    out.reserve(split.size() * 2);
    for (const Triple& q : split) {
        {
            const std::vector<double> scores = scorer.tail_scores(q.head, q.relation);
            auto keep = [&](EntityId c) {
                return c == q.tail || !filter.count(Triple{q.head, q.relation, c});
            };
            QueryOutcome o;
            o.triple = q;
            o.tail_query = true;
            o.rank = rank_from_scores(scores, q.tail, keep);
            o.top1 = top1_from_scores(scores, keep);
            o.source_snapshot = source_snapshot;
            out.push_back(o);
        }
        {
            const std::vector<double> scores = scorer.head_scores(q.relation, q.tail);
            auto keep = [&](EntityId c) {
                return c == q.head || !filter.count(Triple{c, q.relation, q.tail});
            };
            QueryOutcome o;
            o.triple = q;
            o.tail_query = false;
            o.rank = rank_from_scores(scores, q.head, keep);
            o.top1 = top1_from_scores(scores, keep);
            o.source_snapshot = source_snapshot;
            out.push_back(o);
        }
    }
    return out;
}

MetricCell metrics_from_outcomes(const std::vector<QueryOutcome>& outcomes) {
    MetricCell c;
    c.queries = static_cast<int64_t>(outcomes.size());
    if (outcomes.empty()) return c;
    for (const QueryOutcome& o : outcomes) {
        c.mrr += 1.0 / o.rank;
        c.h1 += o.rank <= 1.0 ? 1.0 : 0.0;
        c.h3 += o.rank <= 3.0 ? 1.0 : 0.0;
        c.h10 += o.rank <= 10.0 ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(c.queries);
    c.mrr /= n;
    c.h1 /= n;
    c.h3 /= n;
    c.h10 /= n;
    return c;
}

std::vector<MetricCell> evaluate_model(const Model& model, const SnapshotSequence& seq, int i,
                                       const ModalityView& view) {
    if (i < 0 || i >= seq.T()) throw Fault("evaluate_model: snapshot out of range");
    const TripleSet filter = cumulative_triples(seq, i);
    ModelScorer scorer(model, view);
    std::vector<MetricCell> row;
    row.reserve(static_cast<size_t>(i) + 1);
    for (int j = 0; j <= i; ++j)
        row.push_back(metrics_from_outcomes(evaluate_split(scorer, filter, seq.at(j).test, j)));
    return row;
}

MetricCell avg_metrics(const std::vector<MetricCell>& row) {
    MetricCell avg;
    if (row.empty()) return avg;
    for (const MetricCell& c : row) {
        avg.mrr += c.mrr;
        avg.h1 += c.h1;
        avg.h3 += c.h3;
        avg.h10 += c.h10;
        avg.queries += c.queries;
    }
    const double n = static_cast<double>(row.size());
    avg.mrr /= n;
    avg.h1 /= n;
    avg.h3 /= n;
    avg.h10 /= n;
    return avg;
}

std::optional<double> bwt(const MetricMatrix& m) {
    const int T = m.T();
    if (T < 2) return std::nullopt;
    double sum = 0.0;
    for (int j = 0; j <= T - 2; ++j) sum += m.at(T - 1, j).mrr - m.at(j, j).mrr;
    return sum / static_cast<double>(T - 1);
}

std::vector<double> forgetting_curve(const MetricMatrix& m, int j) {
    std::vector<double> out;
    for (int i = j; i < m.T(); ++i) out.push_back(m.at(i, j).mrr);
    return out;
}

NewVsOld new_vs_old(const MetricMatrix& m, int i) {
    NewVsOld out;
    out.mrr_new = m.at(i, i).mrr;
    if (i > 0) {
        double s = 0.0;
        for (int j = 0; j < i; ++j) s += m.at(i, j).mrr;
        out.mrr_old = s / static_cast<double>(i);
    }
    return out;
}

ErrorHistogram classify_errors(const Model& current, int i,
                               const std::function<const Model*(int)>& checkpoint_of,
                               const SnapshotSequence& seq, const ModalityView& view,
                               const EvalConfig& cfg) {
    ErrorHistogram hist;
    const TripleSet filter_now = cumulative_triples(seq, i);
    ModelScorer scorer(current, view);
    const OldEntitySet prev = old_entity_set(seq, i);
    const std::vector<int64_t> degrees = cumulative_train_degrees(seq, i);
    const int64_t cur_entities = seq.at(i).entity_count;

    auto is_new_low_degree = [&](EntityId e) {
        return e >= prev.count && e < cur_entities &&
               degrees[static_cast<size_t>(e)] <= cfg.cold_start_degree_max;
    };

    for (int j = 0; j <= i; ++j) {
        const std::vector<QueryOutcome> now =
            evaluate_split(scorer, filter_now, seq.at(j).test, j);
        // Historical top-1 correctness of the same queries under θ_j.
        std::vector<uint8_t> was_correct(now.size(), 0);
        bool have_history = j == i;  // the forgetting rule only covers j < i
        if (j < i) {
            if (const Model* past = checkpoint_of(j)) {
                have_history = true;
                const TripleSet filter_then = cumulative_triples(seq, j);
                ModelScorer past_scorer(*past, view);
                const std::vector<QueryOutcome> then =
                    evaluate_split(past_scorer, filter_then, seq.at(j).test, j);
                for (size_t k = 0; k < then.size(); ++k) {
                    const EntityId gold =
                        then[k].tail_query ? then[k].triple.tail : then[k].triple.head;
                    was_correct[k] = then[k].top1 == gold ? 1 : 0;
                }
            } else {
                hist.forgetting_available = false;
            }
        }
        for (size_t k = 0; k < now.size(); ++k) {
            const QueryOutcome& o = now[k];
            const EntityId gold = o.tail_query ? o.triple.tail : o.triple.head;
            const EntityId query_entity = o.tail_query ? o.triple.head : o.triple.tail;
            if (o.top1 == gold) continue;  // not a top-1 error
            if (j < i && have_history && was_correct[k]) {
                hist.forgetting += 1;
            } else if (is_new_low_degree(gold) || is_new_low_degree(query_entity)) {
                hist.cold_start += 1;
            } else if (o.top1 >= 0 &&
                       mm_similarity(o.top1, gold, view, cfg.eta_v, cfg.eta_t) >=
                           cfg.ambiguity_threshold) {
                hist.cross_modal_ambiguity += 1;
            } else {
                hist.other += 1;
            }
        }
    }
    return hist;
}

std::string metric_matrix_to_json(const MetricMatrix& m) {
    json j;
    j["T"] = m.T();
    json cells = json::array();
    for (int i = 0; i < m.T(); ++i) {
        for (int jj = 0; jj <= i; ++jj) {
            const MetricCell& c = m.at(i, jj);
            json cell;
            cell["i"] = i;
            cell["j"] = jj;
            cell["mrr"] = c.mrr;
            cell["hits1"] = c.h1;
            cell["hits3"] = c.h3;
            cell["hits10"] = c.h10;
            cell["queries"] = c.queries;
            cells.push_back(cell);
        }
    }
    j["cells"] = cells;
    return j.dump(2) + "\n";
}

MetricMatrix metric_matrix_from_json(const std::string& text) {
    const json j = json::parse(text);
    MetricMatrix m;
    const int T = j.at("T").get<int>();
    m.rows.resize(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i) m.rows[static_cast<size_t>(i)].clear();
    for (const json& cell : j.at("cells")) {
        const int i = cell.at("i").get<int>();
        const int jj = cell.at("j").get<int>();
        MetricCell c;
        c.mrr = cell.at("mrr").get<double>();
        c.h1 = cell.at("hits1").get<double>();
        c.h3 = cell.at("hits3").get<double>();
        c.h10 = cell.at("hits10").get<double>();
        c.queries = cell.at("queries").get<int64_t>();
        auto& row = m.rows[static_cast<size_t>(i)];
        if (static_cast<int>(row.size()) != jj)
            throw Fault("metric matrix json: cells out of order");
        row.push_back(c);
    }
    return m;
}

void emit_report(const std::string& run_dir, const MetricMatrix& m, const ErrorHistogram* errors,
                 bool complete) {
    // Long-form CSV: one row per populated cell and metric.
    std::ostringstream csv;
    csv << "i,j,metric,value\n";
    const char* names[4] = {"mrr", "hits1", "hits3", "hits10"};
    for (int i = 0; i < m.T(); ++i) {
        for (int j = 0; j <= i; ++j) {
            const MetricCell& c = m.at(i, j);
            const double vals[4] = {c.mrr, c.h1, c.h3, c.h10};
            for (int k = 0; k < 4; ++k)
                csv << i << ',' << j << ',' << names[k] << ',' << format_double(vals[k]) << '\n';
        }
    }
    write_text_file(run_dir + "/report.csv", csv.str());

    json rep;
    rep["complete"] = complete;
    rep["matrix"] = json::parse(metric_matrix_to_json(m));
    if (m.T() > 0) {
        std::vector<MetricCell> last = m.rows.back();
        const MetricCell avg = avg_metrics(last);
        rep["avg"] = {{"mrr", avg.mrr}, {"hits1", avg.h1}, {"hits3", avg.h3},
                      {"hits10", avg.h10}};
        const auto b = bwt(m);
        if (b)
            rep["bwt"] = *b;
        else
            rep["bwt"] = nullptr;
        json curves = json::object();
        for (int j = 0; j < m.T(); ++j)
            curves["s" + std::to_string(j)] = forgetting_curve(m, j);
        rep["forgetting_curves"] = curves;
        json nvo = json::array();
        for (int i = 0; i < m.T(); ++i) {
            const NewVsOld v = new_vs_old(m, i);
            json e;
            e["i"] = i;
            e["mrr_new"] = v.mrr_new;
            if (v.mrr_old)
                e["mrr_old"] = *v.mrr_old;
            else
                e["mrr_old"] = nullptr;
            nvo.push_back(e);
        }
        rep["new_vs_old"] = nvo;
    }
    if (errors) {
        rep["errors"] = {{"forgetting", errors->forgetting},
                         {"cross_modal_ambiguity", errors->cross_modal_ambiguity},
                         {"cold_start", errors->cold_start},
                         {"other", errors->other},
                         {"forgetting_available", errors->forgetting_available}};
    }
    write_text_file(run_dir + "/report.json", rep.dump(2) + "\n");

    fs::create_directories(run_dir + "/plots");
    for (int j = 0; j < m.T(); ++j) {
        std::ostringstream s;
        s << "snapshot,mrr\n";
        const std::vector<double> curve = forgetting_curve(m, j);
        for (size_t k = 0; k < curve.size(); ++k)
            s << (j + static_cast<int>(k)) << ',' << format_double(curve[k]) << '\n';
        write_text_file(run_dir + "/plots/forgetting_s" + std::to_string(j) + ".csv", s.str());
    }
    {
        std::ostringstream s;
        s << "i,mrr_new,mrr_old\n";
        for (int i = 0; i < m.T(); ++i) {
            const NewVsOld v = new_vs_old(m, i);
            s << i << ',' << format_double(v.mrr_new) << ',';
            if (v.mrr_old) s << format_double(*v.mrr_old);
            s << '\n';
        }
        write_text_file(run_dir + "/plots/new_vs_old.csv", s.str());
    }
}

}  // namespace mrckg
