#ifndef TEMPBAL_TEMPBAL_HPP_
#define TEMPBAL_TEMPBAL_HPP_

#include "tempbal/commands.hpp"
#include "tempbal/config.hpp"
#include "tempbal/dataset.hpp"
#include "tempbal/error.hpp"
#include "tempbal/esd.hpp"
#include "tempbal/htsr.hpp"
#include "tempbal/network.hpp"
#include "tempbal/optim.hpp"
#include "tempbal/rmt_lab.hpp"
#include "tempbal/scheduler.hpp"
#include "tempbal/training.hpp"
#include "tempbal/util.hpp"
#include "tempbal/weight_store.hpp"

#endif  // TEMPBAL_TEMPBAL_HPP_
