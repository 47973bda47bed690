#pragma once

#include "lqrbo/random.hpp"
#include "lqrbo/linear_control.hpp"
#include "lqrbo/plants.hpp"
#include "lqrbo/sysid.hpp"
#include "lqrbo/domain.hpp"
#include "lqrbo/gp.hpp"
#include "lqrbo/adaptation.hpp"
#include "lqrbo/bo.hpp"
#include "lqrbo/io.hpp"
#include "lqrbo/harness.hpp"
