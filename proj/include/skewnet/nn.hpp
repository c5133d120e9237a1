#pragma once

#include "skewnet/nn/activation.hpp"
#include "skewnet/nn/adam.hpp"
#include "skewnet/nn/conv1d.hpp"
#include "skewnet/nn/dense.hpp"
#include "skewnet/nn/dropout.hpp"
#include "skewnet/nn/grad_check.hpp"
#include "skewnet/nn/layer.hpp"
#include "skewnet/nn/loss.hpp"
#include "skewnet/nn/lstm.hpp"
#include "skewnet/nn/reshape.hpp"
#include "skewnet/nn/sequential.hpp"
