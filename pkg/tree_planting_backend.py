"""
Batch Backend for the Tree Planting Pipeline
Finds the inputs in an unpacked upload, runs one optimize job and zips the bundle
"""

import os
import shutil
import time
from pathlib import Path
from typing import Any, Dict, Optional

from master_pipeline import MasterPlantingPipeline, RunConfig
from study_area import RASTER_FILES


def find_inputs(root: str) -> Dict[str, Optional[str]]:
    """
    Locate the study area directory and the meteo CSV below root.

    The area directory is the first directory (sorted walk) holding all six
    rasters; the meteo file is the first *.csv whose name contains 'meteo',
    or else the only CSV found.
    """
    area_dir = None
    csv_files = []
    for current, dirs, files in os.walk(root):
        dirs.sort()
        names = set(files)
        if area_dir is None and all(name in names for name in RASTER_FILES.values()):
            area_dir = current
        csv_files.extend(os.path.join(current, f) for f in sorted(files) if f.lower().endswith('.csv'))

    meteo = next((f for f in csv_files if 'meteo' in os.path.basename(f).lower()), None)
    if meteo is None and len(csv_files) == 1:
        meteo = csv_files[0]
    return {'area': area_dir, 'meteo': meteo}


class TreePlantingPipeline:
    """
    Main pipeline class that runs one optimization as a batch job.
    """

    def __init__(self, input_dir: str, output_dir: str, k: int = 10, method: str = 'ils',
                 period: str = 'day', seed: int = 0, **settings):
        """
        Initialize the pipeline.

        Args:
            input_dir: Directory containing the area rasters and meteo.csv
            output_dir: Directory where the result bundle will be saved
            k: Number of trees
            method: Search method ('ils' or a comparison method)
            period: Aggregation period (day, week, year, decade, all)
            seed: Random seed
            settings: Further RunConfig fields
        """
        self.input_dir = input_dir
        self.output_dir = output_dir
        self.k = k
        self.method = method
        self.period = period
        self.seed = seed
        self.settings = settings
        self.pipeline = None

        os.makedirs(output_dir, exist_ok=True)

    def run(self) -> Dict[str, Any]:
        """
        Run the complete planting pipeline.

        Returns:
            Dictionary containing:
                - success: bool indicating if process succeeded
                - output_path: path to the zipped result bundle (if successful)
                - stats: processing statistics
                - error: error message (if failed)
        """
        start_time = time.time()

        try:
            inputs = find_inputs(self.input_dir)
            if inputs['area'] is None:
                return {
                    'success': False,
                    'error': f"No study area found: need {', '.join(sorted(RASTER_FILES.values()))}"
                }
            if inputs['meteo'] is None:
                return {
                    'success': False,
                    'error': 'No meteo CSV found (expected a file named like meteo.csv)'
                }

            bundle_dir = os.path.join(self.output_dir, 'bundle')
            config = RunConfig(command='optimize', area=inputs['area'], meteo=inputs['meteo'],
                               out=bundle_dir, period=self.period, method=self.method,
                               k=self.k, seed=self.seed, quiet=True, **self.settings)
            self.pipeline = MasterPlantingPipeline(config, progress=False)
            stats = self.pipeline.run()

            archive = shutil.make_archive(os.path.join(self.output_dir, 'tree_planting_result'), 'zip', bundle_dir)
            stats['processing_time'] = time.time() - start_time
            stats['bundle_files'] = sorted(p.name for p in Path(bundle_dir).iterdir())

            return {
                'success': True,
                'output_path': archive,
                'stats': stats
            }

        except Exception as e:
            return {
                'success': False,
                'error': str(e),
                'stats': {
                    'processing_time': time.time() - start_time
                }
            }
