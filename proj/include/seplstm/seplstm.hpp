#pragma once

#include "seplstm/bench.hpp"
#include "seplstm/cell.hpp"
#include "seplstm/dataset.hpp"
#include "seplstm/flops.hpp"
#include "seplstm/gradcheck.hpp"
#include "seplstm/metrics.hpp"
#include "seplstm/rng.hpp"
#include "seplstm/tensor.hpp"
#include "seplstm/trainer.hpp"
