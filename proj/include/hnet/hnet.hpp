#pragma once

#include "hnet/tensor.hpp"
#include "hnet/filters.hpp"
#include "hnet/conv.hpp"
#include "hnet/ops.hpp"
#include "hnet/block.hpp"
#include "hnet/graph.hpp"
#include "hnet/params.hpp"
#include "hnet/tape.hpp"
#include "hnet/loss.hpp"
#include "hnet/optim.hpp"
#include "hnet/model.hpp"
#include "hnet/train.hpp"
#include "hnet/data.hpp"
#include "hnet/serialize.hpp"
#include "hnet/probe.hpp"
#include "hnet/dump.hpp"
