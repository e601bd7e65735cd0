#include "graph.hpp"

#include <algorithm>
#include <sstream>

#include "tensor.hpp"

namespace mrckg {

const Snapshot& SnapshotSequence::at(int i) const {
    if (i < 0 || i >= T()) throw Fault("snapshot index out of range: " + std::to_string(i));
    return snapshots[static_cast<size_t>(i)];
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    for (const auto& v : violations)
        os << "violation s" << v.snapshot << " " << v.kind << ": " << v.detail << "\n";
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    return os.str();
}

namespace {

void check_split(const std::vector<Triple>& triples, const char* split, const Snapshot& s,
                 ValidationReport& rep) {
    for (const Triple& t : triples) {
        if (t.head < 0 || t.head >= s.entity_count || t.tail < 0 || t.tail >= s.entity_count) {
            rep.violations.push_back({s.index, "entity_id_out_of_range",
                                      std::string(split) + " triple (" + std::to_string(t.head) +
                                          "," + std::to_string(t.relation) + "," +
                                          std::to_string(t.tail) + ")"});
        }
        if (t.relation < 0 || t.relation >= s.relation_count) {
            rep.violations.push_back({s.index, "relation_id_out_of_range",
                                      std::string(split) + " relation " +
                                          std::to_string(t.relation)});
        }
    }
}

}  // namespace

ValidationReport validate_sequence(const SnapshotSequence& seq) {
    if (seq.snapshots.empty()) throw Fault("validate_sequence: empty sequence");
    ValidationReport rep;
    TripleSet history;
    int64_t prev_e = 0, prev_r = 0;
    for (const Snapshot& s : seq.snapshots) {
        if (s.entity_count < prev_e)
            rep.violations.push_back({s.index, "entity_shrinkage",
                                      std::to_string(prev_e) + " -> " +
                                          std::to_string(s.entity_count)});
        if (s.relation_count < prev_r)
            rep.violations.push_back({s.index, "relation_shrinkage",
                                      std::to_string(prev_r) + " -> " +
                                          std::to_string(s.relation_count)});

        // ΔE_i must be exactly the id range [prev_e, entity_count).
        std::vector<EntityId> expect;
        for (EntityId e = prev_e; e < s.entity_count; ++e) expect.push_back(e);
        std::vector<EntityId> got = s.delta_entities;
        std::sort(got.begin(), got.end());
        if (got != expect) {
            rep.violations.push_back({s.index, "delta_entities_mismatch",
                                      "expected ids " + std::to_string(prev_e) + ".." +
                                          std::to_string(s.entity_count - 1)});
        }

        check_split(s.train, "train", s, rep);
        check_split(s.valid, "valid", s, rep);
        check_split(s.test, "test", s, rep);

        TripleSet train_set(s.train.begin(), s.train.end());
        for (const Triple& b : s.bridge_triples) {
            if (!train_set.count(b))
                rep.violations.push_back({s.index, "bridge_not_in_train",
                                          std::to_string(b.head) + "," +
                                              std::to_string(b.relation) + "," +
                                              std::to_string(b.tail)});
            if (s.index == 0 || !history.count(b))
                rep.violations.push_back({s.index, "bridge_not_historical",
                                          std::to_string(b.head) + "," +
                                              std::to_string(b.relation) + "," +
                                              std::to_string(b.tail)});
            if (s.index >= 1 && !(b.head < prev_e || b.tail < prev_e))
                rep.violations.push_back({s.index, "bridge_no_old_endpoint",
                                          std::to_string(b.head) + "," +
                                              std::to_string(b.relation) + "," +
                                              std::to_string(b.tail)});
        }

        // New triples must not repeat history (duplicates tolerated as warnings
        // within train, where reinforcing bridges are expected).
        TripleSet bridge_set(s.bridge_triples.begin(), s.bridge_triples.end());
        auto check_new = [&](const std::vector<Triple>& ts, const char* split, bool allow_bridge) {
            for (const Triple& t : ts) {
                if (allow_bridge && bridge_set.count(t)) continue;
                if (history.count(t))
                    rep.warnings.push_back("s" + std::to_string(s.index) + " duplicate " +
                                           std::string(split) + " triple (" +
                                           std::to_string(t.head) + "," +
                                           std::to_string(t.relation) + "," +
                                           std::to_string(t.tail) + ") dropped from deltas");
            }
        };
        check_new(s.train, "train", true);
        check_new(s.valid, "valid", false);
        check_new(s.test, "test", false);

        for (const Triple& t : s.train) history.insert(t);
        for (const Triple& t : s.valid) history.insert(t);
        for (const Triple& t : s.test) history.insert(t);
        prev_e = std::max(prev_e, s.entity_count);
        prev_r = std::max(prev_r, s.relation_count);
    }
    seq.validated = rep.ok();
    return rep;
}

std::vector<SnapshotDelta> compute_deltas(const SnapshotSequence& seq) {
    if (!seq.validated)
        throw Fault("compute_deltas: sequence has not passed validate_sequence");
    std::vector<SnapshotDelta> out;
    TripleSet history;
    for (const Snapshot& s : seq.snapshots) {
        SnapshotDelta d;
        d.entities = s.delta_entities;
        std::sort(d.entities.begin(), d.entities.end());
        TripleSet fresh;
        auto add = [&](const std::vector<Triple>& ts) {
            for (const Triple& t : ts)
                if (!history.count(t)) fresh.insert(t);
        };
        add(s.train);
        add(s.valid);
        add(s.test);
        d.triples.assign(fresh.begin(), fresh.end());
        std::sort(d.triples.begin(), d.triples.end());
        for (const Triple& t : d.triples) history.insert(t);
        out.push_back(std::move(d));
    }
    return out;
}

OldEntitySet old_entity_set(const SnapshotSequence& seq, int i) {
    if (i < 0 || i >= seq.T()) throw Fault("old_entity_set: index out of range");
    if (i == 0) return OldEntitySet{0};
    return OldEntitySet{seq.at(i - 1).entity_count};
}

TripleSet cumulative_triples(const SnapshotSequence& seq, int i) {
    TripleSet out;
    for (int j = 0; j <= i && j < seq.T(); ++j) {
        const Snapshot& s = seq.at(j);
        out.insert(s.train.begin(), s.train.end());
        out.insert(s.valid.begin(), s.valid.end());
        out.insert(s.test.begin(), s.test.end());
    }
    return out;
}

std::vector<Triple> cumulative_train(const SnapshotSequence& seq, int i) {
    TripleSet seen;
    std::vector<Triple> out;
    for (int j = 0; j <= i && j < seq.T(); ++j) {
        for (const Triple& t : seq.at(j).train) {
            if (seen.insert(t).second) out.push_back(t);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace mrckg
