#pragma once

#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kbcx/autodiff/array.hpp"
#include "kbcx/autodiff/ops.hpp"
#include "kbcx/autodiff/tape.hpp"

namespace kbcx {

/// Named arrays in declaration order. Buffers (non-trainable entries such as
/// batch-norm running statistics) live alongside trainable parameters so the
/// whole state serializes in one pass.
template <typename T>
class ParameterStore {
   public:
    struct Entry {
        std::string name;
        Array<T> value;
        bool trainable = true;
    };

    ParameterStore() = default;
    ParameterStore(const ParameterStore& other) : entries_(other.entries_) { reindex(); }
    ParameterStore& operator=(const ParameterStore& other) {
        entries_ = other.entries_;
        reindex();
        return *this;
    }
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    Array<T>& add(const std::string& name, Array<T> value, bool trainable = true) {
        if (index_.count(name)) fail(ErrorCode::Internal, "duplicate parameter '" + name + "'");
        entries_.push_back(Entry{name, std::move(value), trainable});
        index_[name] = entries_.size() - 1;
        return entries_.back().value;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Array<T>& at(const std::string& name) { return entry(name).value; }
    const Array<T>& at(const std::string& name) const { return entry(name).value; }

    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) fail(ErrorCode::Internal, "unknown parameter '" + name + "'");
        return entries_[it->second];
    }
    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) fail(ErrorCode::Internal, "unknown parameter '" + name + "'");
        return entries_[it->second];
    }

    std::deque<Entry>& entries() { return entries_; }
    const std::deque<Entry>& entries() const { return entries_; }

    void remove_prefix(const std::string& prefix) {
        std::deque<Entry> kept;
        for (auto& e : entries_)
            if (e.name.rfind(prefix, 0) != 0) kept.push_back(std::move(e));
        entries_ = std::move(kept);
        reindex();
    }

   private:
    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].name] = i;
    }

    std::deque<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Lazily places parameters of a store onto a tape. With a mutable store the
/// binding is in training configuration (buffers may be updated).
template <typename T>
class Binding {
   public:
    Binding(Tape<T>& tape, const ParameterStore<T>& store) : tape_(&tape), store_(&store) {}
    Binding(Tape<T>& tape, ParameterStore<T>& store) : tape_(&tape), store_(&store), mutable_store_(&store) {}

    Tape<T>& tape() { return *tape_; }
    const ParameterStore<T>& store() const { return *store_; }

    Var<T> operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return Var<T>{tape_, it->second};
        const auto& e = store_->entry(name);
        Var<T> v = e.trainable ? tape_->parameter(e.value) : tape_->constant(e.value);
        bound_[name] = v.id;
        return v;
    }

    ops::BatchNormStats<T> batchnorm_stats(const std::string& prefix) {
        ops::BatchNormStats<T> s;
        s.running_mean = &store_->at(prefix + ".running_mean");
        s.running_var = &store_->at(prefix + ".running_var");
        if (mutable_store_) {
            s.update_mean = &mutable_store_->at(prefix + ".running_mean");
            s.update_var = &mutable_store_->at(prefix + ".running_var");
        }
        return s;
    }

    /// Trainable parameters that were bound, with their gradient node ids.
    std::vector<std::pair<std::string, std::size_t>> bound_trainable() const {
        std::vector<std::pair<std::string, std::size_t>> out;
        for (const auto& [name, id] : bound_)
            if (store_->entry(name).trainable) out.emplace_back(name, id);
        return out;
    }

   private:
    Tape<T>* tape_;
    const ParameterStore<T>* store_;
    ParameterStore<T>* mutable_store_ = nullptr;
    std::map<std::string, std::size_t> bound_;
};

}  // namespace kbcx
