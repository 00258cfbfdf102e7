import os
from dotenv import load_dotenv
from typing import Dict, Any, List
import json

# Load environment variables from .env file
load_dotenv()

class Config:
    """
    Configuration manager for ChordSim.
    Handles loading settings from environment variables and config files.
    """

    # Base configuration
    BASE_DIR = os.path.dirname(os.path.abspath(__file__))
    CONFIG_DIR = os.path.join(BASE_DIR, "config")
    CAMPAIGNS_DIR = os.path.join(CONFIG_DIR, "campaigns")
    SCENARIOS_DIR = os.path.join(BASE_DIR, "scenarios")
    OUTPUT_DIR = os.getenv("CHORDSIM_OUTPUT_DIR", os.path.join(BASE_DIR, "output"))
    LOGS_DIR = os.getenv("CHORDSIM_LOGS_DIR", os.path.join(BASE_DIR, "logs"))

    # Run settings
    MODE = os.getenv("CHORDSIM_MODE", "regular")
    SEED = int(os.getenv("CHORDSIM_SEED", "0"))
    MAX_STEPS = int(os.getenv("CHORDSIM_MAX_STEPS", "2000"))
    RING_BITS = int(os.getenv("CHORDSIM_RING_BITS", "4"))

    # Protocol budgets: hop budget is factor * M, quiesce budget is factor * nodes * M
    HOP_BUDGET_FACTOR = int(os.getenv("CHORDSIM_HOP_BUDGET_FACTOR", "4"))
    CONVERGENCE_FACTOR = int(os.getenv("CHORDSIM_CONVERGENCE_FACTOR", "8"))

    LOG_LEVEL = os.getenv("CHORDSIM_LOG_LEVEL", "INFO").upper()

    @classmethod
    def ensure_dirs(cls) -> None:
        os.makedirs(cls.OUTPUT_DIR, exist_ok=True)
        os.makedirs(os.path.join(cls.OUTPUT_DIR, "traces"), exist_ok=True)
        os.makedirs(cls.LOGS_DIR, exist_ok=True)

    @classmethod
    def run_defaults(cls) -> Dict[str, Any]:
        """
        Run parameters taken from the environment.

        Returns:
            Defaults for scenario runs
        """
        return {
            "mode": cls.MODE,
            "seed": cls.SEED,
            "max_steps": cls.MAX_STEPS,
            "hop_budget_factor": cls.HOP_BUDGET_FACTOR,
            "convergence_factor": cls.CONVERGENCE_FACTOR,
        }

    @classmethod
    def get_campaign_config(cls, name: str = "default") -> Dict[str, Any]:
        """
        Get configuration for a fuzz campaign.

        Args:
            name: Name of the campaign

        Returns:
            Configuration dictionary for the campaign
        """
        config_path = os.path.join(cls.CAMPAIGNS_DIR, f"{name}.json")
        if os.path.exists(config_path):
            with open(config_path, "r") as f:
                return json.load(f)
        return {}

    @classmethod
    def save_campaign_config(cls, name: str, config: Dict[str, Any]) -> None:
        """
        Save configuration for a fuzz campaign.

        Args:
            name: Name of the campaign
            config: Configuration dictionary to save
        """
        os.makedirs(cls.CAMPAIGNS_DIR, exist_ok=True)
        config_path = os.path.join(cls.CAMPAIGNS_DIR, f"{name}.json")
        with open(config_path, "w") as f:
            json.dump(config, f, indent=2)

    @classmethod
    def list_campaigns(cls) -> List[str]:
        if not os.path.isdir(cls.CAMPAIGNS_DIR):
            return []
        return sorted(os.path.splitext(f)[0] for f in os.listdir(cls.CAMPAIGNS_DIR) if f.endswith(".json"))

# Create default configuration files if they don't exist
def create_default_configs(force: bool = False) -> List[str]:
    """
    Write the shipped campaign configurations.

    Args:
        force: Overwrite existing files

    Returns:
        Names of the campaigns written
    """
    campaigns = {
        # Convergence, golden rule and get soundness over regular runs
        "default": {
            "runs": 100,
            "nodes": 12,
            "events": 200,
            "ring_bits": 4,
            "seed": 0,
            "mode": "regular",
            "quiesce_every": 10,
            "gap_steps": 2,
            "max_steps": 50000,
            "swap_samples": 10,
            "max_failure_rate": 0.05,
            "weights": {"join": 3, "fair_leave": 1, "unfair_leave": 1, "put": 3, "get": 2}
        },
        # Same budget without the stability gate; violations are expected and counted
        "unrestricted": {
            "runs": 20,
            "nodes": 12,
            "events": 200,
            "ring_bits": 4,
            "seed": 0,
            "mode": "unrestricted",
            "quiesce_every": 10,
            "gap_steps": 1,
            "max_steps": 50000,
            "swap_samples": 0,
            "max_failure_rate": 0.05,
            "weights": {"join": 3, "fair_leave": 2, "unfair_leave": 2, "put": 3, "get": 2}
        },
        "smoke": {
            "runs": 5,
            "nodes": 6,
            "events": 40,
            "ring_bits": 4,
            "seed": 0,
            "mode": "regular",
            "quiesce_every": 10,
            "gap_steps": 2,
            "max_steps": 10000,
            "swap_samples": 5,
            "max_failure_rate": 0.05,
            "weights": {"join": 3, "fair_leave": 1, "unfair_leave": 1, "put": 3, "get": 2}
        }
    }

    written = []
    os.makedirs(Config.CAMPAIGNS_DIR, exist_ok=True)
    for name, campaign in campaigns.items():
        path = os.path.join(Config.CAMPAIGNS_DIR, f"{name}.json")
        if force or not os.path.exists(path):
            Config.save_campaign_config(name, campaign)
            written.append(name)
    return written
