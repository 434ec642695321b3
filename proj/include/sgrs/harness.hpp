#pragma once

#include "sgrs/harness/ablate.hpp"
#include "sgrs/harness/checkpoint.hpp"
#include "sgrs/harness/config.hpp"
#include "sgrs/harness/evaluate.hpp"
#include "sgrs/harness/io.hpp"
#include "sgrs/harness/svg.hpp"
#include "sgrs/harness/sweep.hpp"
#include "sgrs/harness/train.hpp"
