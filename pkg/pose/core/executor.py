import asyncio
import logging
import time
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class FrameExecutor:
    """帧级并行执行器

    threads <= 1 时顺序执行；否则按 threads 大小分批，批内用线程并发，
    输出顺序与输入一致。
    """

    def __init__(self, threads: int = 1):
        self.threads = max(1, int(threads))

    def map(self, func: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """对每一帧执行 func"""
        start = time.perf_counter()
        if self.threads == 1 or len(items) <= 1:
            results = [func(item) for item in items]
        else:
            results = asyncio.run(self._run_batches(func, items))
        logger.debug(f"处理 {len(items)} 帧耗时 {time.perf_counter() - start:.3f}s (threads={self.threads})")
        return results

    async def _run_batches(self, func: Callable[[T], R], items: Sequence[T]) -> List[R]:
        all_results: List[R] = [None] * len(items)  # 预分配结果数组
        for i in range(0, len(items), self.threads):
            batch = items[i:i + self.threads]
            tasks = [asyncio.to_thread(func, item) for item in batch]
            try:
                batch_results = await asyncio.gather(*tasks)
            except Exception as e:
                logger.error(f"第 {i // self.threads + 1} 批次处理失败: {str(e)}")
                raise
            all_results[i:i + len(batch)] = batch_results
        return all_results
