#include "modality.hpp"

#include <algorithm>

namespace mrckg {

Tensor mean_token_rows(const Tensor& tokens) {
    if (tokens.rank() != 2 || tokens.dim(0) == 0) throw Fault("mean_token_rows: bad tokens");
    const int r = tokens.dim(0), c = tokens.dim(1);
    Tensor out = Tensor::zeros({c});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j) += tokens.at(i, j);
    for (int j = 0; j < c; ++j) out.at(j) /= r;
    return out;
}

const ModalityStore::Slot* ModalityStore::slot(EntityId e) const {
    if (e < 0 || e >= static_cast<EntityId>(slots_.size())) return nullptr;
    return &slots_[static_cast<size_t>(e)];
}

ModalityStore::Slot& ModalityStore::slot_mut(EntityId e) {
    if (e < 0) throw Fault("modality store: negative entity id");
    if (e >= static_cast<EntityId>(slots_.size())) slots_.resize(static_cast<size_t>(e) + 1);
    return slots_[static_cast<size_t>(e)];
}

void ModalityStore::set_visual(EntityId e, Tensor tokens) {
    Tensor pooled = mean_token_rows(tokens);
    set_visual(e, std::move(tokens), std::move(pooled));
}

void ModalityStore::set_visual(EntityId e, Tensor tokens, Tensor pooled) {
    if (tokens.rank() != 2 || tokens.dim(1) != d_v_ || tokens.dim(0) == 0)
        throw Fault("set_visual: tokens must be m x d_v with m >= 1");
    if (pooled.rank() != 1 || pooled.dim(0) != d_v_) throw Fault("set_visual: pooled dim");
    tokens.require_finite("visual tokens");
    pooled.require_finite("visual pooled");
    Slot& s = slot_mut(e);
    s.visual_tokens = std::move(tokens);
    s.visual_pooled = std::move(pooled);
    s.has_visual = true;
}

void ModalityStore::set_text(EntityId e, Tensor tokens) {
    Tensor pooled = mean_token_rows(tokens);
    set_text(e, std::move(tokens), std::move(pooled));
}

void ModalityStore::set_text(EntityId e, Tensor tokens, Tensor pooled) {
    if (tokens.rank() != 2 || tokens.dim(1) != d_w_ || tokens.dim(0) == 0)
        throw Fault("set_text: tokens must be n x d_w with n >= 1");
    if (pooled.rank() != 1 || pooled.dim(0) != d_w_) throw Fault("set_text: pooled dim");
    tokens.require_finite("text tokens");
    pooled.require_finite("text pooled");
    Slot& s = slot_mut(e);
    s.text_tokens = std::move(tokens);
    s.text_pooled = std::move(pooled);
    s.has_text = true;
}

bool ModalityStore::has_visual(EntityId e) const {
    const Slot* s = slot(e);
    return s && s->has_visual;
}

bool ModalityStore::has_text(EntityId e) const {
    const Slot* s = slot(e);
    return s && s->has_text;
}

int ModalityStore::visual_token_count(EntityId e) const {
    const Slot* s = slot(e);
    return s && s->has_visual ? s->visual_tokens.dim(0) : 0;
}

int ModalityStore::text_token_count(EntityId e) const {
    const Slot* s = slot(e);
    return s && s->has_text ? s->text_tokens.dim(0) : 0;
}

const Tensor& ModalityStore::visual_tokens(EntityId e) const {
    const Slot* s = slot(e);
    if (!s || !s->has_visual) throw Fault("visual_tokens: entity has no visual modality");
    return s->visual_tokens;
}

const Tensor& ModalityStore::text_tokens(EntityId e) const {
    const Slot* s = slot(e);
    if (!s || !s->has_text) throw Fault("text_tokens: entity has no text modality");
    return s->text_tokens;
}

const Tensor& ModalityStore::visual_pooled(EntityId e) const {
    const Slot* s = slot(e);
    if (!s || !s->has_visual) throw Fault("visual_pooled: entity has no visual modality");
    return s->visual_pooled;
}

const Tensor& ModalityStore::text_pooled(EntityId e) const {
    const Slot* s = slot(e);
    if (!s || !s->has_text) throw Fault("text_pooled: entity has no text modality");
    return s->text_pooled;
}

std::vector<EntityId> ModalityStore::dual_modality_entities(int64_t upto) const {
    std::vector<EntityId> out;
    const int64_t n = std::min<int64_t>(upto, static_cast<int64_t>(slots_.size()));
    for (int64_t e = 0; e < n; ++e)
        if (slots_[static_cast<size_t>(e)].has_visual && slots_[static_cast<size_t>(e)].has_text)
            out.push_back(e);
    return out;
}

bool ModalityStore::operator==(const ModalityStore& o) const {
    if (d_v_ != o.d_v_ || d_w_ != o.d_w_) return false;
    const size_t n = std::max(slots_.size(), o.slots_.size());
    static const Slot kEmpty{};
    for (size_t i = 0; i < n; ++i) {
        const Slot& a = i < slots_.size() ? slots_[i] : kEmpty;
        const Slot& b = i < o.slots_.size() ? o.slots_[i] : kEmpty;
        if (a.has_visual != b.has_visual || a.has_text != b.has_text) return false;
        if (a.has_visual &&
            (!(a.visual_tokens == b.visual_tokens) || !(a.visual_pooled == b.visual_pooled)))
            return false;
        if (a.has_text && (!(a.text_tokens == b.text_tokens) || !(a.text_pooled == b.text_pooled)))
            return false;
    }
    return true;
}

Tensor ModalityView::visual_tokens(EntityId e) const {
    const Tensor& t = store_->visual_tokens(e);
    return zero_visual_ ? Tensor::zeros(t.shape()) : t;
}

Tensor ModalityView::text_tokens(EntityId e) const {
    const Tensor& t = store_->text_tokens(e);
    return zero_text_ ? Tensor::zeros(t.shape()) : t;
}

Tensor ModalityView::visual_pooled(EntityId e) const {
    const Tensor& t = store_->visual_pooled(e);
    return zero_visual_ ? Tensor::zeros(t.shape()) : t;
}

Tensor ModalityView::text_pooled(EntityId e) const {
    const Tensor& t = store_->text_pooled(e);
    return zero_text_ ? Tensor::zeros(t.shape()) : t;
}

double modality_richness(const ModalityView& view, EntityId e, int m_ref, int n_ref) {
    if (m_ref < 1 || n_ref < 1) throw Fault("modality_richness: refs must be >= 1");
    double m = 0.0;
    if (view.has_visual(e))
        m += 0.5 * std::min(1.0, static_cast<double>(view.visual_token_count(e)) / m_ref);
    if (view.has_text(e))
        m += 0.5 * std::min(1.0, static_cast<double>(view.text_token_count(e)) / n_ref);
    return m;
}

}  // namespace mrckg
