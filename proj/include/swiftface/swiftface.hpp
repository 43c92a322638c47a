// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bench.hpp"
#include "config_text.hpp"
#include "detect.hpp"
#include "engine.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "image.hpp"
#include "json_io.hpp"
#include "kernels.hpp"
#include "network.hpp"
#include "pipeline.hpp"
#include "tensor.hpp"
#include "weights.hpp"
