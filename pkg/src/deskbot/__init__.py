"""deskbot: a desk-scale social-robot runtime.

Blackboard knowledge base with RDFS-subset inference, typed in-process
publish/subscribe bus, affordance-based behavior arbitration, hot-deployable
declarative bundles, simulated basic capabilities, and a Wizard-of-Oz
supervisory gateway.
"""

from deskbot.runtime import Runtime, RuntimeConfig, replay

__version__ = "0.1.0"
__all__ = ["Runtime", "RuntimeConfig", "replay", "__version__"]
