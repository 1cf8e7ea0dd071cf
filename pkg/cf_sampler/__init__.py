# Universal rejection sampler for integer-valued distributions given by their characteristic function
from cf_sampler.distributions import DistributionSpec, Family
from cf_sampler.envelope import Envelope, envelope_for
from cf_sampler.sampler import SampleReport, UniversalSampler

__version__ = "0.1.0"
