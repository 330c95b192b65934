// Copyright 2026 The IIANet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "iianet/attention.hpp"
#include "iianet/autodiff.hpp"
#include "iianet/checkpoint.hpp"
#include "iianet/config.hpp"
#include "iianet/data.hpp"
#include "iianet/gradcheck.hpp"
#include "iianet/metrics.hpp"
#include "iianet/model.hpp"
#include "iianet/nn.hpp"
#include "iianet/tensor.hpp"
#include "iianet/trainer.hpp"
