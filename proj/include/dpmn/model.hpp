#pragma once

#include <map>

#include "dpmn/checkpoint.hpp"
#include "dpmn/image_ops.hpp"
#include "dpmn/netblocks.hpp"
#include "dpmn/priors.hpp"

// Model assembly: the frozen baseline SR net, the two refinement branches and
// the complementation module, plus checkpoint/manifest IO and the end-to-end
// forward with output fusion.

namespace dpmn::net {

enum class BranchMode { dual, mask_only, graphic_only, concat_prior };
enum class PriorKind { graphic, structure, concat };
enum class PriorSource { from_previous, from_hr };
enum class PsnStrategy { frozen, finetune, standalone };

inline const char* branch_mode_name(BranchMode m) {
    switch (m) {
        case BranchMode::dual: return "dual";
        case BranchMode::mask_only: return "mask";
        case BranchMode::graphic_only: return "graphic";
        default: return "concat";
    }
}

inline BranchMode branch_mode_from(const std::string& s) {
    if (s == "dual") return BranchMode::dual;
    if (s == "mask") return BranchMode::mask_only;
    if (s == "graphic") return BranchMode::graphic_only;
    if (s == "concat") return BranchMode::concat_prior;
    throw ConfigError("unknown branch mode: " + s);
}

inline const char* strategy_name(PsnStrategy s) {
    switch (s) {
        case PsnStrategy::frozen: return "frozen";
        case PsnStrategy::finetune: return "finetune";
        default: return "standalone";
    }
}

inline PsnStrategy strategy_from(const std::string& s) {
    if (s == "frozen") return PsnStrategy::frozen;
    if (s == "finetune") return PsnStrategy::finetune;
    if (s == "standalone") return PsnStrategy::standalone;
    throw ConfigError("unknown training strategy: " + s);
}

namespace detail {

template <typename T>
std::vector<NamedTensor> export_params(const ParamStore<T>& store) {
    std::vector<NamedTensor> out;
    for (Parameter<T>* p : store.all()) {
        NamedTensor t;
        t.name = p->name;
        t.shape = p->value().shape();
        t.values.reserve(static_cast<size_t>(p->value().numel()));
        for (i64 i = 0; i < p->value().numel(); ++i)
            t.values.push_back(static_cast<float>(p->value()[i]));
        out.push_back(std::move(t));
    }
    return out;
}

template <typename T>
void import_params(const ParamStore<T>& store, const std::vector<NamedTensor>& tensors,
                   const std::string& what) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const NamedTensor& t : tensors) by_name[t.name] = &t;
    for (Parameter<T>* p : store.all()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw IoError(what + ": checkpoint missing tensor " + p->name);
        const NamedTensor& t = *it->second;
        if (t.shape != p->value().shape())
            throw IoError(what + ": shape mismatch for " + p->name + ": " + shape_str(t.shape) +
                          " vs " + shape_str(p->value().shape()));
        for (i64 i = 0; i < p->value().numel(); ++i)
            p->value()[i] = static_cast<T>(t.values[static_cast<size_t>(i)]);
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw IoError(what + ": checkpoint has unexpected tensor " + by_name.begin()->first);
}

}  // namespace detail

// ---------------------------------------------------------------------------

template <typename T>
struct PsnModel {
    ParamStore<T> store;
    TinyPsnParams<T> params;
    bool frozen = false;

    static PsnModel init(u64 seed) {
        PsnModel m;
        Rng rng(seed, 7001);
        m.params = init_tiny_psn(m.store, "psn", rng);
        return m;
    }

    void save(const std::string& path, bool mark_frozen) const {
        save_checkpoint(path, detail::export_params(store));
        save_manifest(path + ".manifest", {{"model", "tiny_psn"}, {"scale", "2"},
                                           {"frozen", mark_frozen ? "1" : "0"}});
    }

    static PsnModel load(const std::string& path) {
        PsnModel m = init(0);
        detail::import_params(m.store, load_checkpoint(path), "psn");
        auto mf = load_manifest(path + ".manifest");
        m.frozen = mf.count("frozen") && mf.at("frozen") == "1";
        return m;
    }
};

template <typename T>
struct Branch {
    PriorKind kind = PriorKind::graphic;
    std::vector<PgrmParams<T>> pgrms;
};

template <typename T>
struct DpmnModel {
    NetConfig cfg;
    BranchMode branch_mode = BranchMode::dual;
    CmmVariant cmm_variant = CmmVariant::full;
    ParamStore<T> store;
    std::vector<Branch<T>> branches;  // [graphic, structure] when dual
    CmmParams<T> cmm;

    static DpmnModel init(const NetConfig& cfg, BranchMode mode, CmmVariant variant, u64 seed) {
        DpmnModel m;
        m.cfg = cfg;
        m.branch_mode = mode;
        m.cmm_variant = variant;
        Rng rng(seed, 7002);
        auto add_branch = [&](const char* name, PriorKind kind, i64 prior_channels) {
            Branch<T> b;
            b.kind = kind;
            for (int i = 0; i < cfg.n_pgrm; ++i)
                b.pgrms.push_back(init_pgrm(m.store, std::string(name) + ".pgrm" + std::to_string(i),
                                            cfg, prior_channels, rng));
            m.branches.push_back(std::move(b));
        };
        switch (mode) {
            case BranchMode::dual:
                add_branch("branch_g", PriorKind::graphic, 2);
                add_branch("branch_s", PriorKind::structure, 1);
                break;
            case BranchMode::graphic_only:
                add_branch("branch_g", PriorKind::graphic, 2);
                break;
            case BranchMode::mask_only:
                add_branch("branch_s", PriorKind::structure, 1);
                break;
            case BranchMode::concat_prior:
                add_branch("branch_c", PriorKind::concat, 3);
                break;
        }
        m.cmm = init_cmm(m.store, "cmm", variant, rng);
        return m;
    }

    std::vector<std::pair<std::string, std::string>> manifest_entries() const {
        std::string windows;
        for (size_t i = 0; i < cfg.window_sizes.size(); ++i)
            windows += (i ? "," : "") + std::to_string(cfg.window_sizes[i]);
        return {{"model", "dpmn"},
                {"n_pgrm", std::to_string(cfg.n_pgrm)},
                {"window_sizes", windows},
                {"heads", std::to_string(cfg.heads)},
                {"patch", std::to_string(cfg.patch)},
                {"embed_dim", std::to_string(cfg.embed_dim)},
                {"alpha", std::to_string(cfg.alpha)},
                {"dynamic_gate", cfg.dynamic_gate ? "1" : "0"},
                {"branch_mode", branch_mode_name(branch_mode)},
                {"cmm_variant", cmm_variant_name(cmm_variant)}};
    }

    void save(const std::string& path) const {
        save_checkpoint(path, detail::export_params(store));
        save_manifest(path + ".manifest", manifest_entries());
    }

    static DpmnModel load(const std::string& path) {
        auto mf = load_manifest(path + ".manifest");
        NetConfig cfg;
        cfg.n_pgrm = std::stoi(mf.at("n_pgrm"));
        cfg.window_sizes.clear();
        std::string ws = mf.at("window_sizes");
        for (size_t pos = 0; pos < ws.size();) {
            size_t comma = ws.find(',', pos);
            if (comma == std::string::npos) comma = ws.size();
            cfg.window_sizes.push_back(std::stoi(ws.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        cfg.heads = std::stoi(mf.at("heads"));
        cfg.patch = std::stoi(mf.at("patch"));
        cfg.embed_dim = std::stoi(mf.at("embed_dim"));
        cfg.alpha = std::stod(mf.at("alpha"));
        cfg.dynamic_gate = mf.at("dynamic_gate") == "1";
        DpmnModel m = init(cfg, branch_mode_from(mf.at("branch_mode")),
                           cmm_variant_from(mf.at("cmm_variant")), 0);
        detail::import_params(m.store, load_checkpoint(path), "dpmn");
        return m;
    }
};

// ---------------------------------------------------------------------------
// forward orchestration

template <typename T>
Tensor<double> prior_image_for(PriorKind kind, const priors::PriorPair& pp) {
    switch (kind) {
        case PriorKind::graphic: return pp.graphic;
        case PriorKind::structure: return pp.structure;
        default: {
            // stacked mask + graphic channels
            Tensor<double> out({pp.structure.dim(0), pp.structure.dim(1), 3});
            for (i64 y = 0; y < out.dim(0); ++y)
                for (i64 x = 0; x < out.dim(1); ++x) {
                    out.at(y, x, 0) = pp.structure.at(y, x, 0);
                    out.at(y, x, 1) = pp.graphic.at(y, x, 0);
                    out.at(y, x, 2) = pp.graphic.at(y, x, 1);
                }
            return out;
        }
    }
}

using PriorLog = std::vector<Tensor<double>>;  // per-step prior images, for inspection

// Iterated refinement. Priors are regenerated from the previous step's output
// (or from the HR image in oracle mode) and enter the graph as constants, so
// no gradient flows through prior generation. prior_override pins the priors
// to given images instead (finite-difference checks hold them fixed this way).
template <typename T>
std::vector<NodePtr<T>> branch_forward(NodePtr<T> base_sr, const Branch<T>& branch,
                                       const NetConfig& cfg, PriorSource source,
                                       const Tensor<double>* hr_image,
                                       AttnTrace<T>* trace = nullptr, PriorLog* prior_log = nullptr,
                                       const PriorLog* prior_override = nullptr) {
    if (source == PriorSource::from_hr)
        require(hr_image != nullptr, "branch_forward", "oracle priors need the HR image");
    std::vector<NodePtr<T>> refined;
    NodePtr<T> x = base_sr;
    for (size_t i = 0; i < branch.pgrms.size(); ++i) {
        Tensor<double> prior;
        if (prior_override) {
            prior = (*prior_override)[i];
        } else {
            const Tensor<double> prior_src =
                source == PriorSource::from_hr ? *hr_image : x->value.template cast<double>();
            prior = prior_image_for<T>(branch.kind, priors::make_priors(prior_src));
        }
        if (prior_log) prior_log->push_back(prior);
        auto prior_node = constant(prior.template cast<T>());
        x = pgrm_forward(x, prior_node, branch.pgrms[i], cfg, trace);
        refined.push_back(x);
    }
    return refined;
}

template <typename T>
struct DpmnOutputs {
    NodePtr<T> base_sr;                              // primary SR image (I^0 analog)
    std::vector<NodePtr<T>> refined_graphic;         // per-step branch outputs
    std::vector<NodePtr<T>> refined_structure;
    NodePtr<T> modulated;                            // CMM output
    NodePtr<T> fused;                                // alpha blend with base
};

// psn may be null only for the standalone strategy (bicubic base).
template <typename T>
DpmnOutputs<T> dpmn_forward(const Tensor<double>& lr_image, const DpmnModel<T>& model,
                            const PsnModel<T>* psn, PsnStrategy strategy, PriorSource prior_source,
                            const Tensor<double>* hr_image, double alpha,
                            AttnTrace<T>* trace = nullptr) {
    DpmnOutputs<T> out;
    if (strategy == PsnStrategy::standalone) {
        out.base_sr = constant(img::bicubic_up2(lr_image).template cast<T>());
    } else {
        require(psn != nullptr, "dpmn_forward", "missing frozen baseline checkpoint");
        auto lr = constant(lr_image.template cast<T>());
        auto sr = tiny_psn_forward(lr, psn->params);
        out.base_sr = strategy == PsnStrategy::frozen ? stop_gradient(sr) : sr;
    }

    std::vector<std::vector<NodePtr<T>>> per_branch;
    for (const Branch<T>& b : model.branches)
        per_branch.push_back(branch_forward(out.base_sr, b, model.cfg, prior_source, hr_image, trace));

    for (size_t i = 0; i < model.branches.size(); ++i) {
        if (model.branches[i].kind == PriorKind::structure)
            out.refined_structure = per_branch[i];
        else
            out.refined_graphic = per_branch[i];
    }

    NodePtr<T> last_a = per_branch[0].back();
    NodePtr<T> last_b = per_branch.size() > 1 ? per_branch[1].back() : per_branch[0].back();
    out.modulated = cmm_forward(last_a, last_b, model.cmm);

    out.fused = add(scale(out.modulated, alpha), scale(out.base_sr, 1.0 - alpha));
    return out;
}

}  // namespace dpmn::net
