#pragma once

#include <vector>

#include "graph.hpp"
#include "tensor.hpp"

namespace mrckg {

// Per-entity frozen pretrained features: token matrices plus pooled vectors.
// Presence flag true ⇔ finite, nonempty data is stored.
class ModalityStore {
public:
    ModalityStore() = default;
    ModalityStore(int d_v, int d_w) : d_v_(d_v), d_w_(d_w) {}

    int visual_dim() const { return d_v_; }
    int text_dim() const { return d_w_; }
    int64_t entity_capacity() const { return static_cast<int64_t>(slots_.size()); }

    void set_visual(EntityId e, Tensor tokens);                 // pooled := mean of token rows
    void set_visual(EntityId e, Tensor tokens, Tensor pooled);  // explicit pooled override
    void set_text(EntityId e, Tensor tokens);
    void set_text(EntityId e, Tensor tokens, Tensor pooled);

    bool has_visual(EntityId e) const;
    bool has_text(EntityId e) const;
    int visual_token_count(EntityId e) const;
    int text_token_count(EntityId e) const;
    const Tensor& visual_tokens(EntityId e) const;
    const Tensor& text_tokens(EntityId e) const;
    const Tensor& visual_pooled(EntityId e) const;
    const Tensor& text_pooled(EntityId e) const;

    // E_vt restricted to ids < upto.
    std::vector<EntityId> dual_modality_entities(int64_t upto) const;

    bool operator==(const ModalityStore& o) const;

private:
    struct Slot {
        Tensor visual_tokens, text_tokens;
        Tensor visual_pooled, text_pooled;
        bool has_visual = false, has_text = false;
    };
    const Slot* slot(EntityId e) const;
    Slot& slot_mut(EntityId e);

    int d_v_ = 0, d_w_ = 0;
    std::vector<Slot> slots_;
};

// Read view with optional value-zeroing per modality (structure_cl / no_visual /
// no_text modes). Presence flags pass through; only values are blanked.
class ModalityView {
public:
    ModalityView() = default;
    explicit ModalityView(const ModalityStore* store, bool zero_visual = false,
                          bool zero_text = false)
        : store_(store), zero_visual_(zero_visual), zero_text_(zero_text) {}

    const ModalityStore* store() const { return store_; }
    int visual_dim() const { return store_->visual_dim(); }
    int text_dim() const { return store_->text_dim(); }
    bool has_visual(EntityId e) const { return store_->has_visual(e); }
    bool has_text(EntityId e) const { return store_->has_text(e); }
    int visual_token_count(EntityId e) const { return store_->visual_token_count(e); }
    int text_token_count(EntityId e) const { return store_->text_token_count(e); }

    Tensor visual_tokens(EntityId e) const;
    Tensor text_tokens(EntityId e) const;
    Tensor visual_pooled(EntityId e) const;
    Tensor text_pooled(EntityId e) const;

    std::vector<EntityId> dual_modality_entities(int64_t upto) const {
        return store_->dual_modality_entities(upto);
    }

private:
    const ModalityStore* store_ = nullptr;
    bool zero_visual_ = false, zero_text_ = false;
};

// M(e): two-arm token-sufficiency score in [0,1].
double modality_richness(const ModalityView& view, EntityId e, int m_ref, int n_ref);

Tensor mean_token_rows(const Tensor& tokens);

}  // namespace mrckg
