#include "io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrckg {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Fault("format_double failed");
    return std::string(buf, ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Fault("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Fault("cannot write file: " + path);
    out << content;
}

std::vector<Triple> read_triples_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Fault("cannot open triple file: " + path);
    std::vector<Triple> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Triple t;
        std::istringstream ls(line);
        if (!(ls >> t.head >> t.relation >> t.tail))
            throw Fault(path + ":" + std::to_string(lineno) + ": malformed triple line");
        out.push_back(t);
    }
    return out;
}

void write_triples_tsv(const std::string& path, const std::vector<Triple>& triples) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Fault("cannot write triple file: " + path);
    for (const Triple& t : triples)
        out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

void write_token_features(const std::string& path, const ModalityStore& store, bool visual) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Fault("cannot write feature file: " + path);
    const int dim = visual ? store.visual_dim() : store.text_dim();
    // Uniform token count per file; derived from the first covered entity.
    int tokens = 0;
    for (EntityId e = 0; e < store.entity_capacity(); ++e) {
        if (visual ? store.has_visual(e) : store.has_text(e)) {
            tokens = visual ? store.visual_token_count(e) : store.text_token_count(e);
            break;
        }
    }
    out << "#dims " << dim << ' ' << tokens << '\n';
    for (EntityId e = 0; e < store.entity_capacity(); ++e) {
        const bool has = visual ? store.has_visual(e) : store.has_text(e);
        if (!has) continue;
        const Tensor& tok = visual ? store.visual_tokens(e) : store.text_tokens(e);
        if (tok.dim(0) != tokens)
            throw Fault("write_token_features: uneven token counts in store");
        out << e << '\t';
        for (size_t i = 0; i < tok.size(); ++i) {
            if (i) out << ',';
            out << format_double(tok.data()[i]);
        }
        out << '\n';
    }
}

namespace {

struct FeatureHeader {
    int dim = 0;
    int tokens = 0;
};

FeatureHeader parse_header(const std::string& line, const std::string& path) {
    FeatureHeader h;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag >> h.dim >> h.tokens) || tag != "#dims" || h.dim <= 0 || h.tokens < 0)
        throw Fault(path + ":1: malformed feature header (expect '#dims <dim> <tokens>')");
    return h;
}

void parse_feature_rows(const std::string& path, int dim, int tokens,
                        const std::function<void(EntityId, Tensor)>& sink) {
    std::ifstream in(path);
    if (!in) throw Fault("cannot open feature file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Fault(path + ": empty feature file");
    parse_header(line, path);
    size_t lineno = 1;
    const size_t expect = static_cast<size_t>(dim) * static_cast<size_t>(std::max(tokens, 1));
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw Fault(path + ":" + std::to_string(lineno) + ": missing tab separator");
        EntityId e = 0;
        auto [p, ec] = std::from_chars(line.data(), line.data() + tab, e);
        if (ec != std::errc() || p != line.data() + tab || e < 0)
            throw Fault(path + ":" + std::to_string(lineno) + ": bad entity id");
        std::vector<double> vals;
        vals.reserve(expect);
        const char* cur = line.data() + tab + 1;
        const char* end = line.data() + line.size();
        while (cur < end) {
            double v = 0.0;
            auto [q, ec2] = std::from_chars(cur, end, v);
            if (ec2 != std::errc())
                throw Fault(path + ":" + std::to_string(lineno) + ": bad value at column " +
                            std::to_string(vals.size()));
            vals.push_back(v);
            cur = q;
            if (cur < end) {
                if (*cur != ',')
                    throw Fault(path + ":" + std::to_string(lineno) + ": expected comma");
                ++cur;
            }
        }
        if (vals.size() != expect)
            throw Fault(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(expect) + " values, got " + std::to_string(vals.size()));
        sink(e, Tensor::matrix(std::max(tokens, 1), dim, std::move(vals)));
    }
}

}  // namespace

void read_token_features(const std::string& path, ModalityStore& store, bool visual) {
    std::ifstream probe(path);
    if (!probe) throw Fault("cannot open feature file: " + path);
    std::string first;
    std::getline(probe, first);
    FeatureHeader h = parse_header(first, path);
    probe.close();
    const int want_dim = visual ? store.visual_dim() : store.text_dim();
    if (h.dim != want_dim)
        throw Fault(path + ": dimension mismatch (file " + std::to_string(h.dim) +
                    ", store " + std::to_string(want_dim) + ")");
    parse_feature_rows(path, h.dim, h.tokens, [&](EntityId e, Tensor tok) {
        if (visual)
            store.set_visual(e, std::move(tok));
        else
            store.set_text(e, std::move(tok));
    });
}

void read_pooled_features(const std::string& path, ModalityStore& store, bool visual) {
    std::ifstream probe(path);
    if (!probe) throw Fault("cannot open feature file: " + path);
    std::string first;
    std::getline(probe, first);
    FeatureHeader h = parse_header(first, path);
    probe.close();
    parse_feature_rows(path, h.dim, 1, [&](EntityId e, Tensor row) {
        Tensor pooled = Tensor::zeros({h.dim});
        for (int j = 0; j < h.dim; ++j) pooled.at(j) = row.at(0, j);
        if (visual) {
            if (!store.has_visual(e))
                throw Fault(path + ": pooled vector for entity without tokens: " +
                            std::to_string(e));
            store.set_visual(e, store.visual_tokens(e), std::move(pooled));
        } else {
            if (!store.has_text(e))
                throw Fault(path + ": pooled vector for entity without tokens: " +
                            std::to_string(e));
            store.set_text(e, store.text_tokens(e), std::move(pooled));
        }
    });
}

ModalityStore ingest_features(const std::string& visual_file, const std::string& text_file) {
    int d_v = 0, d_w = 0;
    auto header_of = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Fault("cannot open feature file: " + path);
        std::string first;
        std::getline(in, first);
        return parse_header(first, path);
    };
    if (!visual_file.empty()) d_v = header_of(visual_file).dim;
    if (!text_file.empty()) d_w = header_of(text_file).dim;
    ModalityStore store(d_v, d_w);
    if (!visual_file.empty()) read_token_features(visual_file, store, true);
    if (!text_file.empty()) read_token_features(text_file, store, false);
    return store;
}

void save_benchmark(const std::string& dir, const SnapshotSequence& seq,
                    const ModalityStore& store, const std::string& build_config_json) {
    fs::create_directories(dir);
    json meta;
    meta["snapshots"] = seq.T();
    std::vector<int64_t> ec, rc;
    for (const Snapshot& s : seq.snapshots) {
        ec.push_back(s.entity_count);
        rc.push_back(s.relation_count);
    }
    meta["entity_counts"] = ec;
    meta["relation_counts"] = rc;
    write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
    if (!build_config_json.empty())
        write_text_file(dir + "/build_config.json", build_config_json);

    for (const Snapshot& s : seq.snapshots) {
        const std::string sd = dir + "/s" + std::to_string(s.index);
        write_triples_tsv(sd + "/train.tsv", s.train);
        write_triples_tsv(sd + "/valid.tsv", s.valid);
        write_triples_tsv(sd + "/test.tsv", s.test);
        std::ostringstream de;
        std::vector<EntityId> ents = s.delta_entities;
        std::sort(ents.begin(), ents.end());
        for (EntityId e : ents) de << e << '\n';
        write_text_file(sd + "/delta_entities.txt", de.str());
    }

    bool any_visual = false, any_text = false;
    for (EntityId e = 0; e < store.entity_capacity(); ++e) {
        any_visual = any_visual || store.has_visual(e);
        any_text = any_text || store.has_text(e);
    }
    if (any_visual) write_token_features(dir + "/features/visual.tsv", store, true);
    if (any_text) write_token_features(dir + "/features/text.tsv", store, false);
}

Benchmark load_benchmark(const std::string& dir) {
    Benchmark b;
    json meta = json::parse(read_text_file(dir + "/meta.json"));
    const int T = meta.at("snapshots").get<int>();
    const auto ec = meta.at("entity_counts").get<std::vector<int64_t>>();
    const auto rc = meta.at("relation_counts").get<std::vector<int64_t>>();
    if (static_cast<int>(ec.size()) != T || static_cast<int>(rc.size()) != T)
        throw Fault(dir + "/meta.json: count arrays do not match snapshot count");

    TripleSet history;
    for (int i = 0; i < T; ++i) {
        const std::string sd = dir + "/s" + std::to_string(i);
        Snapshot s;
        s.index = i;
        s.entity_count = ec[static_cast<size_t>(i)];
        s.relation_count = rc[static_cast<size_t>(i)];
        s.train = read_triples_tsv(sd + "/train.tsv");
        s.valid = read_triples_tsv(sd + "/valid.tsv");
        s.test = read_triples_tsv(sd + "/test.tsv");
        {
            std::ifstream de(sd + "/delta_entities.txt");
            if (!de) throw Fault("cannot open " + sd + "/delta_entities.txt");
            EntityId e;
            while (de >> e) s.delta_entities.push_back(e);
        }
        // Bridges are the train triples already seen in history.
        TripleSet fresh;
        for (const Triple& t : s.train) {
            if (history.count(t))
                s.bridge_triples.push_back(t);
            else
                fresh.insert(t);
        }
        for (const Triple& t : s.valid)
            if (!history.count(t)) fresh.insert(t);
        for (const Triple& t : s.test)
            if (!history.count(t)) fresh.insert(t);
        s.delta_triples.assign(fresh.begin(), fresh.end());
        std::sort(s.delta_triples.begin(), s.delta_triples.end());
        for (const Triple& t : s.delta_triples) history.insert(t);
        b.seq.snapshots.push_back(std::move(s));
    }
    b.report = validate_sequence(b.seq);

    const std::string vis = dir + "/features/visual.tsv";
    const std::string txt = dir + "/features/text.tsv";
    const bool has_vis = fs::exists(vis), has_txt = fs::exists(txt);
    if (has_vis || has_txt)
        b.store = ingest_features(has_vis ? vis : "", has_txt ? txt : "");
    const std::string visp = dir + "/features/visual_pooled.tsv";
    const std::string txtp = dir + "/features/text_pooled.tsv";
    if (fs::exists(visp)) read_pooled_features(visp, b.store, true);
    if (fs::exists(txtp)) read_pooled_features(txtp, b.store, false);
    return b;
}

void save_checkpoint(const std::string& dir, const Model& model, uint64_t seed,
                     int snapshot_index) {
    fs::create_directories(dir);
    json manifest;
    manifest["snapshot"] = snapshot_index;
    manifest["seed"] = seed;
    manifest["entities"] = model.entity_count();
    manifest["relations"] = model.relation_count();
    json cfg;
    cfg["d"] = model.config.d;
    cfg["d_v"] = model.config.d_v;
    cfg["d_w"] = model.config.d_w;
    cfg["d_p"] = model.config.d_p;
    cfg["layers"] = model.config.layers;
    cfg["heads"] = model.config.heads;
    cfg["ffn_hidden"] = model.config.ffn_hidden;
    cfg["init_std"] = model.config.init_std;
    manifest["model"] = cfg;
    json shapes;
    for (const auto& name : model.params.names()) shapes[name] = model.params.at(name).shape();
    manifest["tensors"] = shapes;
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");

    std::ofstream out(dir + "/params.bin", std::ios::binary);
    if (!out) throw Fault("cannot write checkpoint: " + dir);
    for (const auto& name : model.params.names()) {
        const Tensor& t = model.params.at(name);
        const uint32_t nlen = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const uint8_t rank = static_cast<uint8_t>(t.rank());
        out.write(reinterpret_cast<const char*>(&rank), 1);
        for (int i = 0; i < t.rank(); ++i) {
            const uint32_t d = static_cast<uint32_t>(t.dim(i));
            out.write(reinterpret_cast<const char*>(&d), sizeof(d));
        }
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
}

Model load_checkpoint(const std::string& dir) {
    json manifest = json::parse(read_text_file(dir + "/manifest.json"));
    ModelConfig cfg;
    const json& mc = manifest.at("model");
    cfg.d = mc.at("d").get<int>();
    cfg.d_v = mc.at("d_v").get<int>();
    cfg.d_w = mc.at("d_w").get<int>();
    cfg.d_p = mc.at("d_p").get<int>();
    cfg.layers = mc.at("layers").get<int>();
    cfg.heads = mc.at("heads").get<int>();
    cfg.ffn_hidden = mc.at("ffn_hidden").get<int>();
    cfg.init_std = mc.at("init_std").get<double>();

    Model model(cfg, manifest.at("entities").get<int64_t>(),
                manifest.at("relations").get<int64_t>(), 0);

    std::ifstream in(dir + "/params.bin", std::ios::binary);
    if (!in) throw Fault("cannot open checkpoint: " + dir);
    while (true) {
        uint32_t nlen = 0;
        in.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
        if (!in) break;
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        uint8_t rank = 0;
        in.read(reinterpret_cast<char*>(&rank), 1);
        std::vector<int> shape(rank);
        for (int i = 0; i < rank; ++i) {
            uint32_t d = 0;
            in.read(reinterpret_cast<char*>(&d), sizeof(d));
            shape[static_cast<size_t>(i)] = static_cast<int>(d);
        }
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw Fault("truncated checkpoint: " + dir);
        model.params.put(name, std::move(t));
    }
    return model;
}

}  // namespace mrckg
