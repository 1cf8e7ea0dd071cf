import sys

from cf_sampler.runner import main

sys.exit(main())
