#pragma once

// Fixed-capacity FIFO transition store with uniform sampling. Rewards are
// deliberately not stored: they are recomputed from the current reward model
// at sampling time, so reward-model updates never go stale in the buffer.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "r2r/common.hpp"
#include "r2r/matrix.hpp"

namespace r2r {

struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    std::vector<double> next_state;
    bool done = false;
};

struct TransitionBatch {
    Matrix states;
    Matrix actions;
    Matrix next_states;
    std::vector<double> dones;
};

class ReplayBuffer {
  public:
    ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
        : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
        if (capacity < 1) throw ArgumentError("ReplayBuffer: capacity must be >= 1");
        if (state_dim < 1 || action_dim < 1)
            throw ArgumentError("ReplayBuffer: dimensions must be >= 1");
        states_.resize(capacity * state_dim);
        actions_.resize(capacity * action_dim);
        next_states_.resize(capacity * state_dim);
        dones_.resize(capacity);
    }

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }

    void push(const Transition& t) {
        if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ ||
            t.action.size() != action_dim_)
            throw ShapeError("ReplayBuffer::push: transition dimensions do not match buffer");
        std::copy(t.state.begin(), t.state.end(), states_.begin() + cursor_ * state_dim_);
        std::copy(t.action.begin(), t.action.end(), actions_.begin() + cursor_ * action_dim_);
        std::copy(t.next_state.begin(), t.next_state.end(),
                  next_states_.begin() + cursor_ * state_dim_);
        dones_[cursor_] = t.done ? 1 : 0;
        cursor_ = (cursor_ + 1) % capacity_;
        if (size_ < capacity_) ++size_;
    }

    bool can_sample(std::size_t batch_size) const { return size_ >= batch_size; }

    // Uniform with replacement; undersized buffers are the caller's signal to
    // keep exploring, so sampling one is an argument error.
    TransitionBatch sample(std::size_t batch_size, Rng& rng) const {
        if (batch_size < 1) throw ArgumentError("ReplayBuffer::sample: batch_size must be >= 1");
        if (!can_sample(batch_size))
            throw ArgumentError("ReplayBuffer::sample: buffer holds " + std::to_string(size_) +
                                " < batch " + std::to_string(batch_size));
        TransitionBatch b;
        b.states = Matrix(batch_size, state_dim_);
        b.actions = Matrix(batch_size, action_dim_);
        b.next_states = Matrix(batch_size, state_dim_);
        b.dones.resize(batch_size);
        std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
        for (std::size_t r = 0; r < batch_size; ++r) {
            const std::size_t i = pick(rng);
            std::copy_n(states_.begin() + i * state_dim_, state_dim_, b.states.row(r));
            std::copy_n(actions_.begin() + i * action_dim_, action_dim_, b.actions.row(r));
            std::copy_n(next_states_.begin() + i * state_dim_, state_dim_, b.next_states.row(r));
            b.dones[r] = static_cast<double>(dones_[i]);
        }
        return b;
    }

    // Read access to one stored state (row pointer), for classifier negatives.
    const double* state_ptr(std::size_t index) const {
        if (index >= size_) throw ArgumentError("ReplayBuffer::state_ptr: index out of range");
        return states_.data() + index * state_dim_;
    }

  private:
    std::size_t capacity_, state_dim_, action_dim_;
    std::vector<double> states_, actions_, next_states_;
    std::vector<std::uint8_t> dones_;
    std::size_t size_ = 0, cursor_ = 0;
};

inline void buffer_push(ReplayBuffer& buffer, const Transition& t) { buffer.push(t); }

inline TransitionBatch buffer_sample(const ReplayBuffer& buffer, std::size_t batch_size, Rng& rng) {
    return buffer.sample(batch_size, rng);
}

}  // namespace r2r
