#pragma once

#include "dynisp/bayer.hpp"
#include "dynisp/bench.hpp"
#include "dynisp/config.hpp"
#include "dynisp/controller.hpp"
#include "dynisp/conv.hpp"
#include "dynisp/dataset.hpp"
#include "dynisp/denoiser.hpp"
#include "dynisp/encoder.hpp"
#include "dynisp/image_io.hpp"
#include "dynisp/ispops.hpp"
#include "dynisp/losses.hpp"
#include "dynisp/manifest.hpp"
#include "dynisp/metrics.hpp"
#include "dynisp/model.hpp"
#include "dynisp/module.hpp"
#include "dynisp/ops.hpp"
#include "dynisp/optim.hpp"
#include "dynisp/params.hpp"
#include "dynisp/spatial.hpp"
#include "dynisp/tensor.hpp"
#include "dynisp/tensor_io.hpp"
#include "dynisp/training.hpp"
