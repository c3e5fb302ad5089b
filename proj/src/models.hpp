#pragma once

// Model-specific kernels behind the learner interface.

#include <cstdint>
#include <span>
#include <vector>

#include "flame/learner.hpp"

namespace flame::learner::detail {

void softmax_linear_layout(const ModelSpec& spec, ParamLayout& layout);
void softmax_linear_logits(const ModelSpec& spec, std::span<const double> w, const modality::ModalInput& x,
                           std::span<double> z);
void softmax_linear_backward(const ModelSpec& spec, const modality::ModalInput& x, std::span<const double> dz,
                             std::span<double> grad);

struct ResnetGeometry {
    std::size_t width = 2;
    std::size_t kernel = 3;
    std::size_t len0 = 0, len1 = 0, len2 = 0;      // time length before/after each pool
    std::size_t ch0 = 0, ch1 = 0, ch2 = 0, ch3 = 0;  // input, block1, block2, trunk conv
    std::size_t hidden = 0, classes = 0, flat = 0;

    explicit ResnetGeometry(const ModelSpec& spec);
};

// Per-block activations kept for backprop.
struct BlockCache {
    std::vector<double> a;    // conv1 output (skip path)
    std::vector<double> p;    // conv2 output, pre-ReLU
    std::vector<double> q;    // relu(p)
    std::vector<double> s;    // conv3 output + a, pre-ReLU
    std::vector<double> out;  // relu(s)
};

struct ResnetCache {
    const double* input = nullptr;
    BlockCache b1, b2;
    std::vector<double> pool1, pool2;
    std::vector<std::uint8_t> arg1, arg2;  // 0: first of the pair won, 1: second
    std::vector<double> z, h;              // trunk conv pre/post ReLU
    std::vector<double> u, v;              // hidden layer pre/post ReLU
};

void mini_resnet_layout(const ModelSpec& spec, ParamLayout& layout);
void mini_resnet_forward(const ModelSpec& spec, const ParamLayout& layout, std::span<const double> w,
                         const modality::ModalInput& x, ResnetCache& cache, std::span<double> z);
void mini_resnet_backward(const ModelSpec& spec, const ParamLayout& layout, std::span<const double> w,
                          const ResnetCache& cache, std::span<const double> dz, std::span<double> grad);
void mini_resnet_signature(const ResnetCache& cache, std::vector<std::uint8_t>& out);

}  // namespace flame::learner::detail
