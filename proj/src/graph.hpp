#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

namespace mrckg {

using EntityId = int64_t;
using RelationId = int64_t;

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    bool operator==(const Triple& o) const {
        return head == o.head && relation == o.relation && tail == o.tail;
    }
    bool operator<(const Triple& o) const {
        if (head != o.head) return head < o.head;
        if (relation != o.relation) return relation < o.relation;
        return tail < o.tail;
    }
};

struct TripleHash {
    size_t operator()(const Triple& t) const {
        uint64_t h = 1469598103934665603ULL;
        for (uint64_t v : {static_cast<uint64_t>(t.head), static_cast<uint64_t>(t.relation),
                           static_cast<uint64_t>(t.tail)}) {
            h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return static_cast<size_t>(h);
    }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

// One stage of the evolving sequence. entity_count/relation_count are
// cumulative; ids are dense prefixes 0..count-1, assigned at first appearance.
struct Snapshot {
    int index = 0;
    int64_t entity_count = 0;
    int64_t relation_count = 0;
    std::vector<Triple> train, valid, test;
    std::vector<EntityId> delta_entities;
    std::vector<Triple> delta_triples;   // new triples: (train \ bridges) ∪ valid ∪ test
    std::vector<Triple> bridge_triples;  // historical duplicates, train-only
};

struct SnapshotSequence {
    std::vector<Snapshot> snapshots;
    int T() const { return static_cast<int>(snapshots.size()); }
    const Snapshot& at(int i) const;
    mutable bool validated = false;
};

struct ValidationReport {
    struct Violation {
        int snapshot;
        std::string kind;
        std::string detail;
    };
    std::vector<Violation> violations;
    std::vector<std::string> warnings;
    bool ok() const { return violations.empty(); }
    std::string to_string() const;
};

struct SnapshotDelta {
    std::vector<EntityId> entities;
    std::vector<Triple> triples;  // sorted
};

// Dense-prefix view of E_{i-1}; membership is an index comparison.
struct OldEntitySet {
    int64_t count = 0;
    bool contains(EntityId e) const { return e >= 0 && e < count; }
    bool empty() const { return count == 0; }
};

ValidationReport validate_sequence(const SnapshotSequence& seq);
std::vector<SnapshotDelta> compute_deltas(const SnapshotSequence& seq);
OldEntitySet old_entity_set(const SnapshotSequence& seq, int i);

// Cumulative triple set over split triples of snapshots 0..i.
TripleSet cumulative_triples(const SnapshotSequence& seq, int i);
// Cumulative train triples (deduplicated) over snapshots 0..i.
std::vector<Triple> cumulative_train(const SnapshotSequence& seq, int i);

}  // namespace mrckg
