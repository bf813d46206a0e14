import math
import tempfile

import numpy as np
from django.test import SimpleTestCase

from ..depthio import RleMask, XyzRaster
from ..detect_ingest import DetectionRecord, Source
from ..exceptions import ConfigError, GeometryError, MissingInput
from ..fusion import (
    FusionConfig, InstanceRegistry, Observation, count_by_class, fit_box,
    fragmentation, fuse_area, project, read_instance_dump,
    write_instance_dump,
)


def observe(x, class_name='door', image_id='img_0', index=0, n=1,
            confidence=0.8, y=0.0, z=1.0):
    det = DetectionRecord(
        image_id=image_id, area_id='area_1', class_name=class_name,
        box2d=(0.0, 0.0, 1.0, 1.0), confidence=confidence,
        source=Source.SAM3, index=index,
    )
    points = np.tile([x, y, z], (n, 1)).astype(np.float64)
    return Observation(det, points, points.mean(axis=0))


class ProjectTest(SimpleTestCase):

    def test_project_averages_masked_points(self):
        data = np.array(
            [[0, 0, 0], [2, 0, 0], [np.nan] * 3, [9, 9, 9]], np.float32,
        )
        raster = XyzRaster(2, 2, data)
        obs = project(observe(0).detection, raster, RleMask(2, 2, ((0, 3),)))
        self.assertEqual(obs.point_count, 2)
        np.testing.assert_allclose(obs.centroid, [1, 0, 0])

    def test_project_without_valid_depth(self):
        raster = XyzRaster(1, 1, np.full((1, 3), np.nan, np.float32))
        with self.assertRaises(GeometryError):
            project(observe(0).detection, raster, RleMask(1, 1, ((0, 1),)))


class InstanceRegistryTest(SimpleTestCase):

    def test_merge_is_weighted_by_point_count(self):
        registry = InstanceRegistry('area_1')
        first = registry.insert(observe(0.0, n=3, confidence=0.6))
        second = registry.insert(
            observe(0.4, image_id='img_1', n=1, confidence=0.9)
        )
        self.assertEqual(first, second)
        instance = registry.instances[0]
        self.assertAlmostEqual(instance.centroid[0], 0.1)
        self.assertEqual(instance.point_count, 4)
        self.assertEqual(instance.confidence, 0.9)
        self.assertEqual(instance.n_observations, 2)

    def test_boundary_distance_merges(self):
        registry = InstanceRegistry('area_1', FusionConfig(d_merge=0.5))
        registry.insert(observe(0.0))
        registry.insert(observe(0.5, image_id='img_1'))
        self.assertEqual(len(registry), 1)

    def test_chain_follows_greedy_order(self):
        '''
        Assert that a 0.0 / 0.4 / 0.8 chain fuses into two instances:
        the second observation pulls the centroid to 0.2, leaving the
        third 0.6 away.
        '''
        observations = [
            observe(0.8, image_id='img_c'),
            observe(0.0, image_id='img_a'),
            observe(0.4, image_id='img_b'),
        ]
        instances = fuse_area('area_1', observations)
        self.assertEqual(len(instances), 2)
        np.testing.assert_allclose(instances[0].centroid, [0.2, 0.0, 1.0])
        np.testing.assert_allclose(instances[1].centroid, [0.8, 0.0, 1.0])

    def test_classes_never_merge(self):
        registry = InstanceRegistry('area_1')
        registry.insert(observe(0.0, 'door'))
        registry.insert(observe(0.0, 'window', image_id='img_1'))
        self.assertEqual(len(registry), 2)

    def test_equidistant_tie_goes_to_lowest_id(self):
        registry = InstanceRegistry('area_1')
        registry.insert(observe(0.0, image_id='img_0'))
        registry.insert(observe(1.0, image_id='img_1'))
        merged = registry.insert(observe(0.5, image_id='img_2'))
        self.assertEqual(merged, 'area_1:000000')

    def test_structural_surfaces_merge_per_area(self):
        registry = InstanceRegistry('area_1')
        registry.insert(observe(0.0, 'wall'))
        registry.insert(observe(25.0, 'wall', image_id='img_1'))
        self.assertEqual(len(registry), 1)

    def test_every_observation_lands_in_one_instance(self):
        rng = np.random.default_rng(9)
        observations = [
            observe(
                float(rng.uniform(0, 5)), ('door', 'aed')[i % 2],
                image_id=f'img_{i:03d}', index=i,
                n=int(rng.integers(1, 5)), y=float(rng.uniform(0, 5)),
            )
            for i in range(60)
        ]
        instances = fuse_area('area_1', observations)
        members = [
            (o['image_id'], o['index'])
            for instance in instances for o in instance.observations
        ]
        self.assertEqual(len(members), 60)
        self.assertEqual(len(set(members)), 60)
        self.assertEqual(
            sum(i.point_count for i in instances),
            sum(o.point_count for o in observations),
        )
        for instance in instances:
            self.assertTrue(instance.box.contains(instance.points).all())

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            FusionConfig(d_merge=0)
        with self.assertRaises(ConfigError):
            FusionConfig(up_axis='w')


class FitBoxTest(SimpleTestCase):

    def test_rotated_rectangle_yaw(self):
        '''
        Assert that a 4 x 1 m slab rotated 30 degrees about the up axis
        reports a 30 degree yaw.
        '''
        u, v = np.meshgrid(np.linspace(-2, 2, 41), np.linspace(-0.5, 0.5, 11))
        yaw = math.radians(30)
        c, s = math.cos(yaw), math.sin(yaw)
        x = c * u - s * v
        y = s * u + c * v
        points = np.column_stack([
            x.ravel() + 3, y.ravel() - 1, np.tile([0.0, 1.0], x.size // 2 + 1)[:x.size],
        ])
        box = fit_box(points)
        self.assertAlmostEqual(box.yaw, yaw, delta=1e-3)
        np.testing.assert_allclose(box.extents, [4.0, 1.0, 1.0], atol=1e-6)
        np.testing.assert_allclose(box.center, [3.0, -1.0, 0.5], atol=1e-6)

    def test_yaw_is_canonical(self):
        points = np.array([[0, 0, 0], [0, 4, 0], [1, 0, 0], [1, 4, 0]], float)
        box = fit_box(points)
        self.assertTrue(-math.pi / 4 <= box.yaw < math.pi / 4)

    def test_single_point(self):
        box = fit_box(np.array([[1.0, 2.0, 3.0]]))
        self.assertEqual(box.extents, (0.0, 0.0, 0.0))
        self.assertEqual(box.yaw, 0.0)

    def test_empty(self):
        with self.assertRaises(GeometryError):
            fit_box(np.zeros((0, 3)))


class FragmentationTest(SimpleTestCase):

    def test_door_ratio(self):
        ratios = fragmentation({'door': 4899}, {'door': 670, 'aed': 0})
        self.assertEqual(round(ratios['door'], 1), 7.3)
        self.assertIsNone(ratios['aed'])

    def test_count_by_class(self):
        instances = fuse_area('area_1', [
            observe(0.0, 'door'), observe(3.0, 'door', image_id='img_1'),
            observe(0.0, 'aed', image_id='img_2'),
        ])
        self.assertEqual(count_by_class(instances), {'door': 2, 'aed': 1})


class InstanceDumpTest(SimpleTestCase):

    def test_write_then_read(self):
        instances = fuse_area('area_1', [
            observe(0.0, n=3), observe(2.0, 'aed', image_id='img_1', n=2),
        ])
        with tempfile.TemporaryDirectory() as tmp:
            write_instance_dump(tmp, instances, {'schema': 'insight-inst/1'})
            loaded = read_instance_dump(tmp)
        self.assertEqual(
            [i.to_json() for i in loaded], [i.to_json() for i in instances]
        )
        for a, b in zip(loaded, instances):
            np.testing.assert_array_equal(a.points, b.points)

    def test_missing_dump(self):
        with self.assertRaises(MissingInput):
            read_instance_dump('/nonexistent/dump')
