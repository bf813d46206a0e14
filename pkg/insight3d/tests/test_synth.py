import json
import os
import tempfile
from collections import Counter, defaultdict
from dataclasses import replace

from django.test import SimpleTestCase

from ..depthio import read_mask, read_xyz_raster
from ..detect_ingest import load_detections
from ..exceptions import ConfigError, MissingInput
from ..fusion import FusionConfig, count_by_class, fuse_area, project
from ..pcexport import read_ground_truth
from ..synth import SynthSpec, generate, load_spec

SPEC = {
    'areas': [
        {
            'area_id': 'area_1',
            'fixtures': [
                {'class': 'door', 'center': [0, 0, 1]},
                {'class': 'aed', 'center': [2, 0, 1]},
                {'class': 'exit_sign', 'center': [4, 0, 1.5]},
                {'class': 'furniture', 'center': [0, 2, 1]},
            ],
            'wall_views': 3,
        },
        {
            'area_id': 'area_2',
            'fixtures': [
                {'class': 'window', 'center': [0, 0, 1.5]},
                {'class': 'fire_extinguisher', 'center': [2, 0, 1]},
            ],
        },
    ],
    'views': 5,
}


def read_tree(root):
    tree = {}
    for directory, _, files in os.walk(root):
        for name in files:
            path = os.path.join(directory, name)
            with open(path, 'rb') as fh:
                tree[os.path.relpath(path, root)] = fh.read()
    return tree


def fuse_generated(out_dir, pipeline='sam3', d_merge=0.5):
    '''
    Project and fuse the generated detections of one stack, per area.
    '''
    with open(os.path.join(out_dir, 'synth_manifest.json')) as fh:
        manifest = json.load(fh)
    by_area, start = defaultdict(list), 0
    for name in manifest['detection_files'][pipeline]:
        load = load_detections(os.path.join(out_dir, name), start_index=start)
        start += len(load.records)
        for record in load.records:
            raster = read_xyz_raster(os.path.join(
                out_dir, 'rasters', record.area_id, f'{record.image_id}.xyzr'
            ))
            mask = read_mask(os.path.join(out_dir, 'rasters', record.mask))
            by_area[record.area_id].append(project(record, raster, mask))
    return {
        area: fuse_area(area, observations, FusionConfig(d_merge=d_merge))
        for area, observations in sorted(by_area.items())
    }


class SynthSpecTest(SimpleTestCase):

    def test_from_dict_round_trip(self):
        spec = SynthSpec.from_dict(SPEC)
        self.assertEqual(spec.views, 5)
        self.assertEqual(spec.areas[0].fixtures[1].class_name, 'aed')
        self.assertEqual(SynthSpec.from_dict(spec.to_dict()), spec)

    def test_random_is_seeded(self):
        self.assertEqual(SynthSpec.random(3), SynthSpec.random(3))
        spec = SynthSpec.random(3, n_areas=3, n_fixtures=5)
        self.assertEqual(len(spec.areas), 3)
        for area in spec.areas:
            centers = [f.center for f in area.fixtures]
            self.assertEqual(len(set(centers)), 5)

    def test_invalid_specs(self):
        with self.assertRaises(ConfigError):
            SynthSpec.from_dict({'areas': [{'fixtures': []}]})
        with self.assertRaises(ConfigError):
            SynthSpec.from_dict({'areas': [{
                'area_id': 'a', 'fixtures': [{'class': 'toaster',
                                              'center': [0, 0, 0]}],
            }]})
        with self.assertRaises(ConfigError):
            SynthSpec.from_dict({'areas': [], 'cv_duplication': 4})
        with self.assertRaises(ConfigError):
            SynthSpec.from_dict({'areas': [], 'patch': 7})
        with self.assertRaises(ConfigError):
            SynthSpec.from_dict({'areas': [{'area_id': 'a'}, {'area_id': 'a'}]})

    def test_load_spec(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'spec.json')
            with open(path, 'w') as fh:
                json.dump(SPEC, fh)
            self.assertEqual(load_spec(path), SynthSpec.from_dict(SPEC))
            with self.assertRaises(MissingInput):
                load_spec(os.path.join(tmp, 'absent.json'))


class GenerateTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = self.tmp.name
        self.manifest = generate(self.out, SynthSpec.from_dict(SPEC), seed=5)

    def test_manifest(self):
        self.assertEqual(self.manifest['planted'], {
            'aed': 1, 'door': 1, 'exit_sign': 1, 'fire_extinguisher': 1,
            'furniture': 1, 'wall': 1, 'window': 1,
        })
        self.assertEqual(self.manifest['areas']['area_1']['views'], 4 * 5 + 3)
        self.assertEqual(self.manifest['detection_files'], {
            'cv': [
                'detections/cv.yoloe.jsonl',
                'detections/cv.obj365_nano.jsonl',
                'detections/cv.ocr.jsonl',
            ],
            'sam3': ['detections/sam3.sam3.jsonl'],
        })

    def test_same_seed_same_bytes(self):
        with tempfile.TemporaryDirectory() as other:
            generate(other, SynthSpec.from_dict(SPEC), seed=5)
            self.assertEqual(read_tree(other), read_tree(self.out))

    def test_detection_counts(self):
        sam3 = load_detections(
            os.path.join(self.out, 'detections', 'sam3.sam3.jsonl')
        )
        self.assertEqual(len(sam3.records), 6 * 5 + 3)
        ocr = load_detections(
            os.path.join(self.out, 'detections', 'cv.ocr.jsonl')
        )
        self.assertEqual(len(ocr.records), 5)
        self.assertTrue(all(r.mask is None for r in ocr.records))
        self.assertTrue(all(r.class_name == 'exit_sign' for r in ocr.records))

    def test_reference_cloud_labels(self):
        gt = read_ground_truth(os.path.join(self.out, 'gt', 'area_1'))
        counts = Counter(gt.labels.tolist())
        patch = 8 * 8
        self.assertEqual(counts, {
            'door': 5 * patch, 'clutter': 10 * patch, 'chair': 5 * patch,
            'wall': 3 * patch,
        })

    def test_fusion_recovers_planted_fixtures(self):
        '''
        Assert that noiseless views fuse back into exactly the planted
        instances, while a merge distance below the view jitter keeps
        every view apart.
        '''
        fused = fuse_generated(self.out)
        counts = Counter()
        for instances in fused.values():
            counts.update(count_by_class(instances))
        self.assertEqual(dict(counts), self.manifest['planted'])
        for instances in fused.values():
            for instance in instances:
                if instance.class_name != 'wall':
                    self.assertEqual(instance.n_observations, 5)

        apart = fuse_generated(self.out, d_merge=1e-3)
        self.assertEqual(
            sum(len(i) for i in apart.values()), 6 * 5 + 1,
        )

    def test_cv_stack_fuses_with_text_detections(self):
        fused = fuse_generated(self.out, pipeline='cv')
        counts = Counter()
        for instances in fused.values():
            counts.update(count_by_class(instances))
        planted = dict(self.manifest['planted'])
        del planted['wall']
        self.assertEqual(dict(counts), planted)


class LargeSceneRecoveryTest(SimpleTestCase):

    def test_hundred_fixtures_seen_ten_times(self):
        '''
        Assert that 100 random fixtures over four areas, each seen from
        10 views, fuse back into exactly the planted instances.
        '''
        spec = replace(
            SynthSpec.random(23, n_areas=4, n_fixtures=25, views=10),
            image_size=16,
        )
        self.assertEqual(sum(len(a.fixtures) for a in spec.areas), 100)
        with tempfile.TemporaryDirectory() as out:
            manifest = generate(out, spec, seed=23)
            fused = fuse_generated(out)
        counts = Counter()
        for instances in fused.values():
            counts.update(count_by_class(instances))
        self.assertEqual(dict(counts), manifest['planted'])
        self.assertEqual(sum(counts.values()), 100 + 4)
        for instances in fused.values():
            for instance in instances:
                if instance.class_name != 'wall':
                    self.assertEqual(instance.n_observations, 10)
