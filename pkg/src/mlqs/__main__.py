import sys
from mlqs.bench import main
sys.exit(main())
