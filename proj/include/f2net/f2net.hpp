#pragma once

#include "f2net/center.hpp"
#include "f2net/checkpoint.hpp"
#include "f2net/config.hpp"
#include "f2net/data.hpp"
#include "f2net/fusion.hpp"
#include "f2net/geometry.hpp"
#include "f2net/grad_check.hpp"
#include "f2net/image_io.hpp"
#include "f2net/layers.hpp"
#include "f2net/matching.hpp"
#include "f2net/metrics.hpp"
#include "f2net/model.hpp"
#include "f2net/ops.hpp"
#include "f2net/optim.hpp"
#include "f2net/tensor.hpp"
#include "f2net/train.hpp"
